"""Writers for the MOKP/MOCX interchange formats.

The layouts follow the published interchange contract (all integers
little-endian u32 unless noted):

  MOKP: magic "MOKP", version 1, clip_id (u32 length + UTF-8),
        source_fps f64, p, f, then p*f*17*3 f64 values.
  MOCX: magic "MOCX", version 1, clip_id, T, rows, cols,
        then T*rows*cols f32 values.

This module deliberately re-implements the writers instead of importing
the consumer package: the file formats are the component boundary.
Files are written via temp-then-rename so readers never see partial
output.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def write_mokp(path: Path, clip_id: str, source_fps: float, joints: np.ndarray) -> None:
    """joints: [p, f, 17, 3] float array."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.ndim != 4 or joints.shape[2:] != (17, 3):
        raise ValueError(f"expected [p, f, 17, 3] joints, got {joints.shape}")
    p, f = joints.shape[:2]
    parts = [
        b"MOKP", struct.pack("<I", FORMAT_VERSION), _string(clip_id),
        struct.pack("<dII", source_fps, p, f),
        np.ascontiguousarray(joints, dtype="<f8").tobytes(),
    ]
    _atomic_write(path, b"".join(parts))


def write_mocx(path: Path, clip_id: str, features: np.ndarray) -> None:
    """features: [T, rows, cols] float array, stored float32."""
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"expected [T, rows, cols] features, got {features.shape}")
    t, rows, cols = features.shape
    parts = [
        b"MOCX", struct.pack("<I", FORMAT_VERSION), _string(clip_id),
        struct.pack("<III", t, rows, cols),
        np.ascontiguousarray(features, dtype="<f4").tobytes(),
    ]
    _atomic_write(path, b"".join(parts))
