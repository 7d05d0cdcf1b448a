"""Per-frame scene feature maps and the context embedding block.

Each frame of a clip comes with a 50x768 encoder feature map (50 patch
tokens, 768 channels). The embedding block concatenates the 50 patch rows
of a frame into one 38400-wide vector and runs a two-layer kernel-1
convolution stack (38400 -> hidden -> d_model, GELU between), yielding one
d_model context token per frame. Kernel-1 convolutions make the block a
per-frame affine map, which keeps it exactly checkable against a dense
oracle.

Context tokens carry no positional embedding, so the downstream model is
invariant to context frame order. All persons in a clip share one token
sequence; it is computed once per clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .params import ParameterSet, glorot_uniform

PATCH_ROWS = 50
PATCH_COLS = 768


@dataclass
class ContextFeatureMap:
    clip_id: str
    frames: np.ndarray  # [T, rows, cols]

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValidationError(f"context frames must be [T, rows, cols], got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValidationError(f"clip {self.clip_id}: non-finite context features")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class ContextTokens:
    clip_id: str
    tokens: Tensor  # [T, d_model]

    @property
    def n_frames(self) -> int:
        return self.tokens.shape[0]


def init_context_params(
    params: ParameterSet,
    rng: np.random.Generator,
    d_model: int,
    hidden: int = 1024,
    rows: int = PATCH_ROWS,
    cols: int = PATCH_COLS,
) -> None:
    """Register the embedding block's parameters under ``context_embed.*``."""
    width = rows * cols
    params.add("context_embed.conv1.weight", glorot_uniform(rng, width, hidden, (1, width, hidden)))
    params.add("context_embed.conv1.bias", np.zeros(hidden))
    params.add("context_embed.conv2.weight", glorot_uniform(rng, hidden, d_model, (1, hidden, d_model)))
    params.add("context_embed.conv2.bias", np.zeros(d_model))


def embed_context(
    fmap: ContextFeatureMap,
    params: ParameterSet,
    rows: int = PATCH_ROWS,
    cols: int = PATCH_COLS,
) -> ContextTokens:
    """Map [T, rows, cols] feature maps to one token per frame."""
    if fmap.frames.shape[1:] != (rows, cols):
        raise ValidationError(
            f"clip {fmap.clip_id}: context feature shape {fmap.frames.shape[1:]} != configured ({rows}, {cols})"
        )
    if fmap.n_frames < 1:
        raise ValidationError(f"clip {fmap.clip_id}: context map has no frames")
    t = fmap.n_frames
    x = Tensor(fmap.frames.reshape(t, rows * cols))  # concatenate patch rows per frame
    h = ad.conv1d(x, params["context_embed.conv1.weight"].value, params["context_embed.conv1.bias"].value)
    h = ad.gelu(h)
    out = ad.conv1d(h, params["context_embed.conv2.weight"].value, params["context_embed.conv2.bias"].value)
    return ContextTokens(clip_id=fmap.clip_id, tokens=out)


def embed_context_batch(
    fmaps: list[ContextFeatureMap],
    params: ParameterSet,
    rows: int = PATCH_ROWS,
    cols: int = PATCH_COLS,
) -> list[ContextTokens]:
    """Embed several clips in one convolution pass (one GEMM per layer).

    Equivalent per clip to embed_context; kernel-1 convolutions act
    per frame, so stacking frames across clips changes nothing.
    """
    if not fmaps:
        return []
    for fmap in fmaps:
        if fmap.frames.shape[1:] != (rows, cols):
            raise ValidationError(
                f"clip {fmap.clip_id}: context feature shape {fmap.frames.shape[1:]} != configured ({rows}, {cols})"
            )
        if fmap.n_frames < 1:
            raise ValidationError(f"clip {fmap.clip_id}: context map has no frames")
    counts = [f.n_frames for f in fmaps]
    stacked = Tensor(np.concatenate([f.frames.reshape(f.n_frames, rows * cols) for f in fmaps]))
    h = ad.conv1d(stacked, params["context_embed.conv1.weight"].value, params["context_embed.conv1.bias"].value)
    h = ad.gelu(h)
    out = ad.conv1d(h, params["context_embed.conv2.weight"].value, params["context_embed.conv2.bias"].value)
    tokens, start = [], 0
    for fmap, n in zip(fmaps, counts):
        tokens.append(ContextTokens(fmap.clip_id, ad.slice_along(out, 0, start, start + n)))
        start += n
    return tokens


def align_context(tokens: ContextTokens, motion_frames: int) -> ContextTokens:
    """All frame tokens are kept: each of the f-1 motion queries attends over all f."""
    if tokens.n_frames != motion_frames:
        raise ValidationError(
            f"clip {tokens.clip_id}: {tokens.n_frames} context tokens for a {motion_frames}-frame clip"
        )
    return tokens


def broadcast_to_persons(tokens: ContextTokens, n_persons: int) -> list[ContextTokens]:
    """Share one token sequence across persons without recomputing it."""
    if n_persons < 1:
        raise ValidationError(f"n_persons must be >= 1, got {n_persons}")
    return [tokens] * n_persons
