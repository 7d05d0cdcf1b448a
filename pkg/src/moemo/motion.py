"""Keypoint clips, 4 Hz resampling, per-person splitting, and movement vectors.

A clip carries per-person trajectories of 17 three-dimensional joints.
The 17 joint slots follow the upstream pose estimator's convention
(ears 0,4; eyes 1,2; nose 3; shoulders 7,8; elbows 6,9; hands 5,10;
wrists 13,14; knees 12,15; ankles 11,16 in zero-based order) and are
treated as opaque here; users of a real estimator must map conventions
explicitly.

A movement vector for transition t and joint j is the exact concatenation
of the joint's position in frame t and frame t+1 — six numbers, no
arithmetic beyond copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ValidationError

EMOTION_CLASSES = ("joy", "angry", "disgust", "fear", "sadness", "surprise")
N_JOINTS = 17
N_COORDS = 3


def label_index(name: str) -> int:
    try:
        return EMOTION_CLASSES.index(name)
    except ValueError:
        raise ValidationError(f"unknown emotion label {name!r}; expected one of {EMOTION_CLASSES}") from None


@dataclass
class PersonTrack:
    person_id: int
    joints: np.ndarray  # [f, 17, 3] float64

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.ndim != 3 or self.joints.shape[1:] != (N_JOINTS, N_COORDS):
            raise ValidationError(
                f"person {self.person_id}: joints must be [f, {N_JOINTS}, {N_COORDS}], got {self.joints.shape}"
            )
        if not np.isfinite(self.joints).all():
            raise ValidationError(f"person {self.person_id}: non-finite joint coordinates")

    @property
    def n_frames(self) -> int:
        return self.joints.shape[0]


@dataclass
class KeypointClip:
    clip_id: str
    source_fps: float
    persons: list[PersonTrack]
    label: Optional[int] = None
    context_ref: str = ""

    def __post_init__(self):
        if self.source_fps <= 0:
            raise ValidationError(f"clip {self.clip_id}: source_fps must be positive, got {self.source_fps}")
        if not self.persons:
            raise ValidationError(f"clip {self.clip_id}: empty persons list")
        frames = {p.n_frames for p in self.persons}
        if len(frames) != 1:
            raise ValidationError(f"clip {self.clip_id}: persons disagree on frame count: {sorted(frames)}")
        if self.n_frames < 2:
            raise ValidationError(f"clip {self.clip_id}: too few frames ({self.n_frames}), need at least 2")
        if self.label is not None and not 0 <= self.label < len(EMOTION_CLASSES):
            raise ValidationError(f"clip {self.clip_id}: label index {self.label} out of range")

    @property
    def n_frames(self) -> int:
        return self.persons[0].n_frames

    @property
    def n_persons(self) -> int:
        return len(self.persons)


@dataclass
class MovementVectorSeq:
    person_id: int
    vectors: np.ndarray  # [f-1, 17, 6]: (pos at t, pos at t+1) per joint

    @property
    def n_transitions(self) -> int:
        return self.vectors.shape[0]


def resample(clip: KeypointClip, target_hz: float = 4.0, max_frames: int = 16) -> KeypointClip:
    """Decimate to target_hz by keeping frames floor(k * fps / target_hz).

    All persons are resampled identically; the result reports target_hz as
    its rate. Applying the same resample twice is a no-op.
    """
    if target_hz <= 0:
        raise ValidationError(f"target_hz must be positive, got {target_hz}")
    if clip.source_fps < target_hz:
        raise ValidationError(
            f"clip {clip.clip_id}: source rate {clip.source_fps} below target rate {target_hz}"
        )
    ratio = clip.source_fps / target_hz
    f = clip.n_frames
    indices = []
    for k in range(max_frames):
        idx = math.floor(k * ratio)
        if idx >= f:
            break
        indices.append(idx)
    if len(indices) < 2:
        raise ValidationError(
            f"clip {clip.clip_id}: too few frames after resampling ({len(indices)}), need at least 2"
        )
    idx = np.asarray(indices)
    persons = [PersonTrack(p.person_id, p.joints[idx].copy()) for p in clip.persons]
    return replace(clip, source_fps=target_hz, persons=persons)


def split_persons(clip: KeypointClip) -> list[tuple[int, PersonTrack]]:
    """One (person_id, track) pair per person, order preserved.

    Context features are shared: every returned track keeps the clip's
    context_ref.
    """
    return [(p.person_id, p) for p in clip.persons]


def movement_vectors(track: PersonTrack) -> MovementVectorSeq:
    """Pair consecutive frames per joint: output [f-1, 17, 6], exact copies."""
    if track.n_frames < 2:
        raise ValidationError(f"person {track.person_id}: too few frames ({track.n_frames}) for movement vectors")
    vectors = np.concatenate([track.joints[:-1], track.joints[1:]], axis=-1)
    return MovementVectorSeq(person_id=track.person_id, vectors=vectors)


def root_center(track: PersonTrack) -> PersonTrack:
    """Opt-in: subtract the per-frame joint centroid (default pipeline keeps raw coordinates)."""
    centered = track.joints - track.joints.mean(axis=1, keepdims=True)
    return PersonTrack(track.person_id, centered)
