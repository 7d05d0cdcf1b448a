"""Export operations: frames in, interchange files out."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from . import formats
from .config import AdapterConfig, AdapterError, N_JOINTS, NoPersonDetectedError
from .encoder import PatchProjectionEncoder
from .frames import iter_frames
from .pose import MarkerPoseBackend, PoseBackend


def export_keypoints(
    config: AdapterConfig,
    out_path: Path,
    clip_id: Optional[str] = None,
    backend: Optional[PoseBackend] = None,
) -> Path:
    """Run the pose backend over every frame and write one MOKP file.

    Persons are tracked by their index in the backend's per-frame output;
    every person must appear in every frame (the marker backend is
    single-person, so this holds trivially)."""
    backend = backend or MarkerPoseBackend()
    clip_id = clip_id or config.frames.stem
    slot_of = config.joint_map

    per_frame: list[list[np.ndarray]] = []
    for frame_no, frame in enumerate(iter_frames(config)):
        people = backend.detect(frame)
        if not people:
            raise NoPersonDetectedError(f"no person detected in frame {frame_no}")
        frame_tracks = []
        for person in people:
            joints = np.full((N_JOINTS, 3), np.nan)
            for name, xyz in person.items():
                if name not in slot_of:
                    raise AdapterError(f"backend joint {name!r} missing from joint_map")
                joints[slot_of[name]] = xyz
            if np.isnan(joints).any():
                missing = [n for n, s in slot_of.items() if np.isnan(joints[s]).any()]
                raise AdapterError(f"frame {frame_no}: joints not detected: {missing}")
            frame_tracks.append(joints)
        per_frame.append(frame_tracks)

    n_persons = {len(tracks) for tracks in per_frame}
    if len(n_persons) != 1:
        raise AdapterError(f"person count varies across frames: {sorted(n_persons)}")
    # [p, f, 17, 3]
    joints = np.stack([np.stack(tracks) for tracks in per_frame], axis=1)
    formats.write_mokp(out_path, clip_id, config.source_fps, joints)
    return Path(out_path)


def export_context(
    config: AdapterConfig,
    out_path: Path,
    clip_id: Optional[str] = None,
    encoder: Optional[PatchProjectionEncoder] = None,
) -> Path:
    """Encode every frame to a patch feature map and write one MOCX file."""
    encoder = encoder or PatchProjectionEncoder()
    clip_id = clip_id or config.frames.stem
    maps = [encoder.encode(frame) for frame in iter_frames(config)]
    if not maps:
        raise AdapterError("no frames to encode")
    features = np.stack(maps)
    if features.shape[1:] != (config.patch_rows, config.patch_cols):
        raise AdapterError(
            f"encoder produced {features.shape[1:]}, configured {config.patch_rows}x{config.patch_cols}"
        )
    formats.write_mocx(out_path, clip_id, features)
    return Path(out_path)
