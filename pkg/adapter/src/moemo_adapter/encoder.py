"""Frame encoder producing per-frame patch feature maps.

A stand-in for a pretrained image encoder: the frame is resized to a
fixed canvas, cut into a 7x7 patch grid plus one whole-frame patch (50
rows), and each patch is pushed through a fixed random projection to 768
channels. The projection matrix is derived from a hard-coded key, so the
encoder is fully deterministic: identical frames give identical features
and re-runs give identical file hashes. A real encoder can replace this
class; only the (50, 768) output contract matters.
"""

from __future__ import annotations

import cv2
import numpy as np

from .config import PATCH_COLS, PATCH_ROWS

_GRID = 7                    # 7*7 patches + 1 global = 50 rows
_CANVAS = 224
_PATCH = _CANVAS // _GRID    # 32 px
_PROJECTION_KEY = 7309


class PatchProjectionEncoder:
    def __init__(self):
        rng = np.random.default_rng([_PROJECTION_KEY])
        n_in = _PATCH * _PATCH * 3
        self._w = rng.standard_normal((n_in, PATCH_COLS)) / np.sqrt(n_in)
        self._w_global = rng.standard_normal((_GRID * _GRID * 3, PATCH_COLS)) / np.sqrt(_GRID * _GRID * 3)

    def encode(self, frame: np.ndarray) -> np.ndarray:
        """BGR uint8 frame -> [50, 768] float64 feature map."""
        canvas = cv2.resize(frame, (_CANVAS, _CANVAS), interpolation=cv2.INTER_AREA)
        x = canvas.astype(np.float64) / 255.0
        rows = np.empty((PATCH_ROWS, PATCH_COLS))
        # Whole-frame summary row first (one mean color per grid cell).
        coarse = x.reshape(_GRID, _PATCH, _GRID, _PATCH, 3).mean(axis=(1, 3))
        rows[0] = coarse.ravel() @ self._w_global
        patches = x.reshape(_GRID, _PATCH, _GRID, _PATCH, 3).transpose(0, 2, 1, 3, 4)
        rows[1:] = patches.reshape(_GRID * _GRID, -1) @ self._w
        return rows
