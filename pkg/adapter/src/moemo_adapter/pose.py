"""Pose backends: turn a frame into per-person 3D joint estimates.

The backend interface is a single `detect` method so a real detector and
lifting model can be dropped in. The bundled MarkerPoseBackend needs no
model downloads: it reads clips where each joint is rendered as a
colored circular marker with a distinct hue, and recovers depth from the
marker's apparent radius. `render_marker_frame` is the matching renderer
used to produce such clips.
"""

from __future__ import annotations

from typing import Dict, List, Protocol, Tuple

import cv2
import numpy as np

from .config import JOINT_SLOTS, N_JOINTS

JointObservations = Dict[str, Tuple[float, float, float]]


class PoseBackend(Protocol):
    def detect(self, frame: np.ndarray) -> List[JointObservations]:
        """Per-person {joint_name: (x, y, z)} for one BGR frame."""
        ...


# Marker geometry: hue index i out of 180 degrees OpenCV hue space,
# radius encodes depth as r = BASE_RADIUS * (1 + DEPTH_GAIN * z).
MARKER_HUES = np.linspace(5, 175, N_JOINTS).round().astype(int)
BASE_RADIUS = 9.0
DEPTH_GAIN = 0.35
_HUE_TOL = 4


def render_marker_frame(
    joints: np.ndarray, size: int = 256, scale: float = 60.0
) -> np.ndarray:
    """Draw one frame for a [17, 3] joint array; inverse of detection.

    x/y land at size/2 + scale * value; z only affects marker radius, so
    keep |z| small enough that markers stay circular and on-canvas.
    """
    frame = np.zeros((size, size, 3), dtype=np.uint8)
    for i in range(N_JOINTS):
        x, y, z = joints[i]
        center = (int(round(size / 2 + scale * x)), int(round(size / 2 + scale * y)))
        radius = max(2, int(round(BASE_RADIUS * (1.0 + DEPTH_GAIN * z))))
        hsv = np.uint8([[[MARKER_HUES[i], 255, 255]]])
        bgr = cv2.cvtColor(hsv, cv2.COLOR_HSV2BGR)[0, 0]
        cv2.circle(frame, center, radius, tuple(int(v) for v in bgr), thickness=-1)
    return frame


class MarkerPoseBackend:
    """Detects the colored circular joint markers drawn by
    render_marker_frame; single-person only."""

    def __init__(self, size: int = 256, scale: float = 60.0):
        self.size = size
        self.scale = scale

    def detect(self, frame: np.ndarray) -> List[JointObservations]:
        hsv = cv2.cvtColor(frame, cv2.COLOR_BGR2HSV)
        joints: JointObservations = {}
        for i, name in enumerate(JOINT_SLOTS):
            hue = int(MARKER_HUES[i])
            mask = (
                (np.abs(hsv[:, :, 0].astype(int) - hue) <= _HUE_TOL)
                & (hsv[:, :, 1] > 128)
                & (hsv[:, :, 2] > 128)
            )
            ys, xs = np.nonzero(mask)
            if xs.size == 0:
                continue
            cx, cy = float(xs.mean()), float(ys.mean())
            # Area -> radius -> depth.
            radius = np.sqrt(xs.size / np.pi)
            z = (radius / BASE_RADIUS - 1.0) / DEPTH_GAIN
            joints[name] = (
                (cx - self.size / 2) / self.scale,
                (cy - self.size / 2) / self.scale,
                float(z),
            )
        return [joints] if joints else []
