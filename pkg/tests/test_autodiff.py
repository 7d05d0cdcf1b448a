import numpy as np
import pytest

from moemo import autodiff as ad
from moemo.autodiff import Tensor

from conftest import assert_grad_close, finite_difference


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


class TestMatmul:
    def test_identity(self):
        x = np.arange(8.0).reshape(2, 4)
        out = ad.matmul(Tensor(np.eye(2)), Tensor(x))
        np.testing.assert_array_equal(out.data, x)

    def test_small_product(self):
        out = ad.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
        np.testing.assert_array_equal(out.data, [[3], [7]])

    def test_grad_of_sum(self):
        # d sum(a@b) / da at a=I, b=[[2,3],[4,5]] -> row sums of b broadcast: [[5,9],[5,9]]
        a = leaf(np.eye(2))
        b = Tensor([[2.0, 3.0], [4.0, 5.0]])
        ad.sum_all(ad.matmul(a, b)).backward()
        np.testing.assert_allclose(a.grad, [[5, 9], [5, 9]], atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestSoftmax:
    def test_uniform_logits(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=-1)
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-12)

    def test_large_logits_no_overflow(self):
        out = ad.softmax(Tensor([1000.0, 1000.0]), axis=-1)
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-12)

    def test_scalar_exponential_oracle(self):
        # Frozen from exp([1,2,3]) / sum(exp([1,2,3]))
        out = ad.softmax(Tensor([1.0, 2.0, 3.0]), axis=-1)
        np.testing.assert_allclose(out.data, [0.090030573, 0.244728471, 0.665240956], atol=1e-9)

    def test_rows_sum_to_one(self, rng):
        for _ in range(1000):
            x = Tensor(rng.standard_normal((3, 5)) * rng.uniform(0.1, 50))
            s = ad.softmax(x, axis=-1).data
            assert (s >= 0).all()
            np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-9)

    def test_invalid_axis(self):
        with pytest.raises(ValueError, match="axis"):
            ad.softmax(Tensor([1.0, 2.0]), axis=2)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = leaf([1.0, 2.0, 3.0])
        ad.sum_all(x).backward()
        np.testing.assert_array_equal(x.grad, [1, 1, 1])

    def test_square_gradient(self):
        x = leaf([1.0, 2.0])
        ad.sum_all(ad.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2, 4], atol=1e-12)

    def test_rejects_non_scalar_loss(self):
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(leaf([1.0, 2.0]))

    def test_tape_topological_order(self):
        x = leaf([1.0, 2.0])
        y = ad.mul(x, x)
        z = ad.sum_all(ad.add(y, x))
        tape = z.backward()
        pos = {id(t): i for i, t in enumerate(tape.nodes)}
        for node in tape.nodes:
            for parent in node._parents:
                assert pos[id(parent)] < pos[id(node)]

    def test_leaf_grad_shapes_match_values(self, rng):
        a = leaf(rng.standard_normal((3, 4)))
        b = leaf(rng.standard_normal((4, 2)))
        ad.sum_all(ad.relu(ad.matmul(a, b))).backward()
        assert a.grad.shape == a.shape
        assert b.grad.shape == b.shape

    def test_reused_node_accumulates(self):
        x = leaf([3.0])
        ad.sum_all(ad.add(x, x)).backward()
        np.testing.assert_array_equal(x.grad, [2.0])


def _gradcheck_case(name, rng):
    """Build (loss_fn, params) pairs per op for finite-difference checking."""
    if name == "matmul":
        a, b = leaf(rng.standard_normal((3, 4))), leaf(rng.standard_normal((4, 2)))
        return lambda: ad.sum_all(ad.mul(y := ad.matmul(a, b), y)), [a, b]
    if name == "add":
        a, b = leaf(rng.standard_normal((3, 4))), leaf(rng.standard_normal((3, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.add(a, b), y)), [a, b]
    if name == "add_bias":
        a, b = leaf(rng.standard_normal((3, 4))), leaf(rng.standard_normal(4))
        return lambda: ad.sum_all(ad.mul(y := ad.add(a, b), y)), [a, b]
    if name == "mul":
        a, b = leaf(rng.standard_normal((2, 5))), leaf(rng.standard_normal((2, 5)))
        return lambda: ad.sum_all(ad.mul(ad.mul(a, b), b)), [a, b]
    if name == "scalar_mul":
        a = leaf(rng.standard_normal((4, 3)))
        return lambda: ad.sum_all(ad.mul(y := ad.scalar_mul(a, 2.5), y)), [a]
    if name == "relu":
        a = leaf(rng.standard_normal((5, 4)) + 0.05)  # keep away from the kink
        return lambda: ad.sum_all(ad.mul(y := ad.relu(a), y)), [a]
    if name == "gelu":
        a = leaf(rng.standard_normal((4, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.gelu(a), y)), [a]
    if name == "layer_norm":
        x = leaf(rng.standard_normal((3, 6)))
        g, b = leaf(rng.standard_normal(6)), leaf(rng.standard_normal(6))
        return lambda: ad.sum_all(ad.mul(y := ad.layer_norm(x, g, b), y)), [x, g, b]
    if name == "conv1d":
        x = leaf(rng.standard_normal((7, 3)))
        w, b = leaf(rng.standard_normal((3, 3, 2))), leaf(rng.standard_normal(2))
        return lambda: ad.sum_all(ad.mul(y := ad.conv1d(x, w, b), y)), [x, w, b]
    if name == "concat":
        a, b = leaf(rng.standard_normal((2, 3))), leaf(rng.standard_normal((2, 2)))
        return lambda: ad.sum_all(ad.mul(y := ad.concat([a, b], axis=1), y)), [a, b]
    if name == "mean":
        a = leaf(rng.standard_normal((4, 5)))
        return lambda: ad.sum_all(ad.mul(y := ad.mean(a, axis=0), y)), [a]
    if name == "transpose":
        a = leaf(rng.standard_normal((2, 3, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.transpose(a, (2, 0, 1)), y)), [a]
    if name == "reshape":
        a = leaf(rng.standard_normal((3, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.reshape(a, (2, 6)), y)), [a]
    if name == "slice_along":
        a = leaf(rng.standard_normal((4, 6)))
        return lambda: ad.sum_all(ad.mul(y := ad.slice_along(a, 1, 1, 4), y)), [a]
    if name == "softmax":
        a = leaf(rng.standard_normal((3, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.softmax(a, axis=-1), y)), [a]
    if name == "log_softmax":
        a = leaf(rng.standard_normal((3, 4)))
        return lambda: ad.sum_all(ad.mul(y := ad.log_softmax(a, axis=-1), y)), [a]
    if name == "cross_entropy":
        a = leaf(rng.standard_normal((4, 6)))
        labels = rng.integers(0, 6, size=4)
        return lambda: ad.cross_entropy_with_softmax(a, labels), [a]
    raise AssertionError(name)


OPS = [
    "matmul", "add", "add_bias", "mul", "scalar_mul", "relu", "gelu",
    "layer_norm", "conv1d", "concat", "mean", "transpose", "reshape",
    "slice_along", "softmax", "log_softmax", "cross_entropy",
]


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("op", OPS)
def test_gradients_match_finite_differences(op, seed):
    # 17 ops x 8 seeds = 136 random graphs
    rng = np.random.default_rng(1000 * seed + hash(op) % 1000)
    loss_fn, leaves = _gradcheck_case(op, rng)
    loss_fn().backward()
    for i, p in enumerate(leaves):
        numeric = finite_difference(lambda: loss_fn().item(), p.data)
        assert_grad_close(p.grad, numeric, what=f"{op} input {i} (seed {seed})")


class TestStructuralOps:
    def test_reshape_transpose_roundtrip_exact(self, rng):
        x = rng.standard_normal((3, 4, 5))
        t = Tensor(x)
        back = ad.transpose(ad.transpose(t, (2, 0, 1)), (1, 2, 0))
        np.testing.assert_array_equal(back.data, x)
        np.testing.assert_array_equal(ad.reshape(ad.reshape(t, (60,)), (3, 4, 5)).data, x)

    def test_add_rejects_general_broadcast(self):
        with pytest.raises(ValueError, match="mismatch"):
            ad.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 1))))

    def test_conv1d_kernel1_equals_matmul(self, rng):
        x = rng.standard_normal((6, 5))
        w = rng.standard_normal((1, 5, 3))
        b = rng.standard_normal(3)
        out = ad.conv1d(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, x @ w[0] + b, atol=1e-12)

    def test_no_grad_suppresses_recording(self):
        x = leaf([1.0, 2.0])
        with ad.no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad and y._vjp is None

    def test_forward_deterministic(self, rng):
        x = rng.standard_normal((4, 4))
        a = ad.gelu(ad.softmax(Tensor(x), axis=-1)).data
        b = ad.gelu(ad.softmax(Tensor(x.copy()), axis=-1)).data
        assert (a == b).all()

    def test_finite_outputs_on_finite_inputs(self, rng):
        x = Tensor(rng.standard_normal((5, 5)) * 100)
        for out in (ad.softmax(x, -1), ad.gelu(x), ad.relu(x), ad.log_softmax(x, -1)):
            assert np.isfinite(out.data).all()


def test_cross_entropy_matches_manual_log_softmax(rng):
    logits = rng.standard_normal((5, 6))
    labels = rng.integers(0, 6, size=5)
    loss = ad.cross_entropy_with_softmax(Tensor(logits), labels)
    logp = ad.log_softmax(Tensor(logits), axis=-1).data
    np.testing.assert_allclose(loss.item(), -logp[np.arange(5), labels].mean(), atol=1e-12)
