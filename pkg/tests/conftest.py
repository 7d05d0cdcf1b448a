import numpy as np
import pytest


def finite_difference(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. arr, mutated in place."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(1e-4, np.abs(analytic).max(), np.abs(numeric).max())
    return float(np.abs(analytic - numeric).max() / denom)


def assert_grad_close(analytic, numeric, tol: float = 1e-5, what: str = ""):
    err = relative_error(analytic, numeric)
    assert err < tol, f"gradient mismatch{' for ' + what if what else ''}: rel err {err:.3g} >= {tol}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
