"""Adapter configuration.

The adapter is a format bridge: it turns frames into keypoint (MOKP) and
context (MOCX) interchange files and performs no downstream math.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

N_JOINTS = 17
PATCH_ROWS = 50
PATCH_COLS = 768

# Skeleton convention used by the bundled marker backend: wrists and
# hands are separate slots and there are no hip joints.
JOINT_SLOTS = (
    "head", "neck",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hand", "right_hand",
    "spine",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
    "left_foot", "right_foot",
)

DEFAULT_JOINT_MAP = {name: i for i, name in enumerate(JOINT_SLOTS)}


class AdapterError(Exception):
    pass


class ConfigError(AdapterError):
    pass


class NoPersonDetectedError(AdapterError):
    pass


@dataclass
class AdapterConfig:
    frames: Path                         # video file or directory of image frames
    source_fps: float = 30.0
    target_hz: float = 4.0               # downstream resampling rate, recorded only
    joint_map: dict = field(default_factory=lambda: dict(DEFAULT_JOINT_MAP))
    patch_rows: int = PATCH_ROWS
    patch_cols: int = PATCH_COLS
    on_corrupt: str = "abort"            # or "skip"

    def __post_init__(self):
        self.frames = Path(self.frames)
        if self.source_fps <= 0 or self.target_hz <= 0:
            raise ConfigError("source_fps and target_hz must be positive")
        if self.on_corrupt not in ("abort", "skip"):
            raise ConfigError(f"on_corrupt must be 'abort' or 'skip', got {self.on_corrupt!r}")
        if (self.patch_rows, self.patch_cols) != (PATCH_ROWS, PATCH_COLS):
            raise ConfigError(
                f"encoder dims {self.patch_rows}x{self.patch_cols} do not match the "
                f"interchange contract {PATCH_ROWS}x{PATCH_COLS}"
            )
        slots = sorted(self.joint_map.values())
        if slots != list(range(N_JOINTS)):
            raise ConfigError(
                f"joint_map must cover all {N_JOINTS} slots exactly once, got slots {slots}"
            )
