"""The MoEmo cross-attention transformer and its two ablation variants.

Movement vectors enter as a sequence of f-1 tokens (one per frame
transition, 17 joints x 6 coordinates flattened to 102 values, linearly
projected to d_model with a learned positional embedding). Context tokens
come from the context embedding block, one per frame, with no positional
embedding.

Variants:
  full                queries from motion tokens, keys/values from context
                      tokens (cross-attention fusion)
  no_context          self-attention over motion tokens only; context is
                      ignored entirely
  no_cross_attention  the context token at each transition's start frame is
                      concatenated onto the motion token, projected back to
                      d_model, then plain self-attention

Each transformer block is pre-norm residual (attention, then MLP),
followed by one residual MLP sub-block whose weights are shared across
all blocks. The classifier mean-pools tokens and applies a linear map
plus softmax over the six emotion classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import context as ctx_mod
from .autodiff import Tensor
from .context import ContextFeatureMap, ContextTokens
from .errors import ValidationError
from .motion import EMOTION_CLASSES, MovementVectorSeq
from .params import ParameterSet, glorot_uniform, substream

VARIANTS = ("full", "no_context", "no_cross_attention")
MOTION_TOKEN_WIDTH = 17 * 6
MAX_POSITIONS = 64


@dataclass
class ModelConfig:
    d_model: int = 128
    n_blocks: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0
    n_classes: int = 6
    variant: str = "full"
    context_hidden: int = 1024
    context_rows: int = ctx_mod.PATCH_ROWS
    context_cols: int = ctx_mod.PATCH_COLS
    # Alternative sequence aggregation: sum per-token log-probabilities
    # instead of mean-pooling features before the classifier.
    logprob_pooling: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.n_blocks < 1:
            raise ValidationError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.d_model % self.n_heads != 0:
            raise ValidationError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def uses_context(self) -> bool:
        return self.variant != "no_context"

    @property
    def mlp_hidden(self) -> int:
        return int(self.d_model * self.mlp_ratio)


@dataclass
class AttentionInternals:
    """Per-block attention record for tests and inspection."""
    q: Tensor
    k: Tensor
    v: Tensor
    scores: list[Tensor] = field(default_factory=list)   # per head
    weights: list[Tensor] = field(default_factory=list)  # per head, row-stochastic


@dataclass
class EmotionDistribution:
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if (self.probs < 0).any() or abs(self.probs.sum() - 1.0) > 1e-6:
            raise ValidationError(f"not a probability vector: {self.probs}")

    @property
    def argmax(self) -> int:
        # np.argmax takes the first maximum: ties break toward the lowest index.
        return int(np.argmax(self.probs))

    @property
    def top_class(self) -> str:
        return EMOTION_CLASSES[self.argmax]


def _linear(x: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{prefix}.weight"].value), params[f"{prefix}.bias"].value)


def _mlp(x: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    return _linear(ad.gelu(_linear(x, params, f"{prefix}.fc1")), params, f"{prefix}.fc2")


def _layer_norm(x: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    return ad.layer_norm(x, params[f"{prefix}.gain"].value, params[f"{prefix}.bias"].value)


def init_params(config: ModelConfig, seed: int) -> ParameterSet:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    rng = substream(seed, "init")
    d = config.d_model
    params = ParameterSet()

    def linear(prefix: str, fan_in: int, fan_out: int):
        params.add(f"{prefix}.weight", glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out)))
        params.add(f"{prefix}.bias", np.zeros(fan_out))

    def norm(prefix: str):
        params.add(f"{prefix}.gain", np.ones(d))
        params.add(f"{prefix}.bias", np.zeros(d))

    linear("motion.proj", MOTION_TOKEN_WIDTH, d)
    params.add("motion.pos_embed", 0.02 * rng.standard_normal((MAX_POSITIONS, d)))

    if config.uses_context:
        ctx_mod.init_context_params(
            params, rng, d_model=d, hidden=config.context_hidden,
            rows=config.context_rows, cols=config.context_cols,
        )
        # Normalizing embedded context bounds the very-wide embedding's
        # output so its optimizer drift cannot swamp the motion pathway.
        norm("context.ln")
    if config.variant == "no_cross_attention":
        linear("fuse", 2 * d, d)

    for i in range(config.n_blocks):
        norm(f"block{i}.ln1")
        for name in ("q", "k", "v", "out"):
            linear(f"block{i}.attn.{name}", d, d)
        norm(f"block{i}.ln2")
        linear(f"block{i}.mlp.fc1", d, config.mlp_hidden)
        linear(f"block{i}.mlp.fc2", config.mlp_hidden, d)

    norm("shared.ln")
    linear("shared.mlp.fc1", d, config.mlp_hidden)
    linear("shared.mlp.fc2", config.mlp_hidden, d)

    norm("final.ln")
    linear("head", d, config.n_classes)
    return params


def motion_tokens(vectors: MovementVectorSeq, params: ParameterSet, d_model: int) -> Tensor:
    """Project each transition's 102 values to d_model and add positions."""
    m = vectors.n_transitions
    if m < 1:
        raise ValidationError("movement vector sequence is empty")
    if m > MAX_POSITIONS:
        raise ValidationError(f"sequence of {m} transitions exceeds positional table ({MAX_POSITIONS})")
    flat = Tensor(vectors.vectors.reshape(m, MOTION_TOKEN_WIDTH))
    proj = _linear(flat, params, "motion.proj")
    pos = ad.slice_along(params["motion.pos_embed"].value, 0, 0, m)
    return ad.add(proj, pos)


def cross_attention(
    q_tokens: Tensor,
    c_tokens: Tensor,
    params: ParameterSet,
    prefix: str,
    n_heads: int,
    collect: Optional[list[AttentionInternals]] = None,
) -> Tensor:
    """Multi-head scaled dot-product attention; queries from q_tokens,
    keys/values from c_tokens. With q_tokens is c_tokens this is plain
    self-attention."""
    d = q_tokens.shape[1]
    if c_tokens.shape[1] != d:
        raise ValidationError(f"token width mismatch: {q_tokens.shape} vs {c_tokens.shape}")
    dh = d // n_heads
    q = _linear(q_tokens, params, f"{prefix}.q")
    k = _linear(c_tokens, params, f"{prefix}.k")
    v = _linear(c_tokens, params, f"{prefix}.v")
    internals = AttentionInternals(q=q, k=k, v=v)
    heads = []
    scale = 1.0 / math.sqrt(dh)
    for h in range(n_heads):
        qh = ad.slice_along(q, 1, h * dh, (h + 1) * dh)
        kh = ad.slice_along(k, 1, h * dh, (h + 1) * dh)
        vh = ad.slice_along(v, 1, h * dh, (h + 1) * dh)
        scores = ad.scalar_mul(ad.matmul(qh, ad.transpose(kh)), scale)
        weights = ad.softmax(scores, axis=-1)
        internals.scores.append(scores)
        internals.weights.append(weights)
        heads.append(ad.matmul(weights, vh))
    merged = heads[0] if n_heads == 1 else ad.concat(heads, axis=1)
    if collect is not None:
        collect.append(internals)
    return _linear(merged, params, f"{prefix}.out")


def transformer_block(
    x: Tensor,
    c_tokens: Optional[Tensor],
    params: ParameterSet,
    block: int,
    n_heads: int,
    collect: Optional[list[AttentionInternals]] = None,
) -> Tensor:
    """Pre-norm residual block plus the weight-shared residual sub-block.

    c_tokens None means self-attention over x.
    """
    normed = _layer_norm(x, params, f"block{block}.ln1")
    kv = c_tokens if c_tokens is not None else normed
    x = ad.add(x, cross_attention(normed, kv, params, f"block{block}.attn", n_heads, collect))
    x = ad.add(x, _mlp(_layer_norm(x, params, f"block{block}.ln2"), params, f"block{block}.mlp"))
    x = ad.add(x, _mlp(_layer_norm(x, params, "shared.ln"), params, "shared.mlp"))
    return x


def logits_from_tokens(tokens: Tensor, params: ParameterSet, config: ModelConfig) -> Tensor:
    """Aggregate the token sequence into one row of class logits."""
    m = tokens.shape[0]
    if m < 1:
        raise ValidationError("cannot classify an empty token sequence")
    if config.logprob_pooling:
        per_token = _linear(tokens, params, "head")            # [m, n_classes]
        logp = ad.log_softmax(per_token, axis=-1)
        return ad.scalar_mul(ad.reshape(ad.mean(logp, axis=0), (1, config.n_classes)), float(m))
    pooled = ad.reshape(ad.mean(tokens, axis=0), (1, tokens.shape[1]))
    return _linear(pooled, params, "head")


def classify(tokens: Tensor, params: ParameterSet, config: ModelConfig) -> EmotionDistribution:
    logits = logits_from_tokens(tokens, params, config)
    return EmotionDistribution(ad.softmax(logits, axis=-1).data)


def forward(
    vectors: MovementVectorSeq,
    ctx_tokens: Optional[ContextTokens],
    config: ModelConfig,
    params: ParameterSet,
    collect: Optional[list[AttentionInternals]] = None,
) -> Tensor:
    """Full forward pass to class logits, shape [1, n_classes]."""
    x = motion_tokens(vectors, params, config.d_model)
    m = vectors.n_transitions

    c: Optional[Tensor] = None
    if config.variant == "full":
        if ctx_tokens is None:
            raise ValidationError("full variant requires context tokens")
        ctx_mod.align_context(ctx_tokens, m + 1)
        c = _layer_norm(ctx_tokens.tokens, params, "context.ln")
    elif config.variant == "no_cross_attention":
        if ctx_tokens is None:
            raise ValidationError("no_cross_attention variant requires context tokens")
        ctx_mod.align_context(ctx_tokens, m + 1)
        normed_ctx = _layer_norm(ctx_tokens.tokens, params, "context.ln")
        start_frames = ad.slice_along(normed_ctx, 0, 0, m)
        x = _linear(ad.concat([x, start_frames], axis=1), params, "fuse")

    for i in range(config.n_blocks):
        x = transformer_block(x, c, params, i, config.n_heads, collect)
    return logits_from_tokens(_layer_norm(x, params, "final.ln"), params, config)


def predict(
    vectors: MovementVectorSeq,
    ctx_tokens: Optional[ContextTokens],
    config: ModelConfig,
    params: ParameterSet,
) -> EmotionDistribution:
    with ad.no_grad():
        logits = forward(vectors, ctx_tokens, config, params)
    return EmotionDistribution(ad.softmax(logits, axis=-1).data)


class MoEmoModel:
    """Config plus parameters, with clip-level convenience entry points."""

    def __init__(self, config: ModelConfig, seed: int = 0, params: Optional[ParameterSet] = None):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    def embed_context(self, fmap: ContextFeatureMap) -> Optional[ContextTokens]:
        if not self.config.uses_context:
            return None
        return ctx_mod.embed_context(
            fmap, self.params, rows=self.config.context_rows, cols=self.config.context_cols
        )

    def forward(self, vectors, ctx_tokens, collect=None) -> Tensor:
        return forward(vectors, ctx_tokens, self.config, self.params, collect)

    def predict(self, vectors, ctx_tokens) -> EmotionDistribution:
        return predict(vectors, ctx_tokens, self.config, self.params)
