"""Training loop, stratified splitting, and evaluation metrics.

Training minimizes mean cross-entropy over clips with either plain SGD or
an adaptive-moments optimizer. Everything is deterministic given the
seed: initialization, shuffle order, and batch reduction order are all
fixed, so identical configs produce bitwise-identical loss curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import context as ctx_mod
from .context import ContextFeatureMap
from .errors import MoemoError, ValidationError
from .model import MoEmoModel
from .motion import EMOTION_CLASSES, MovementVectorSeq
from .params import ParameterSet, substream

N_CLASSES = len(EMOTION_CLASSES)


@dataclass
class Example:
    """One training/evaluation unit: one person's movement in one clip."""
    clip_id: str
    vectors: MovementVectorSeq
    label: int
    # Context maps can be large; load lazily so datasets stream from disk.
    context: Optional[Callable[[], ContextFeatureMap]] = None

    def context_map(self) -> Optional[ContextFeatureMap]:
        return self.context() if self.context is not None else None


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 3e-4
    optimizer: str = "adaptive_moments"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    split_fraction: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValidationError(f"split_fraction must be in (0,1), got {self.split_fraction}")
        if self.learning_rate < 0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adaptive_moments"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class EvalReport:
    overall_accuracy: float
    macro_f1: float
    per_class_accuracy: list[float]
    per_class_f1: list[float]
    confusion: np.ndarray  # [6, 6] ints, rows = true class
    n_examples: int


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ParameterSet):
        for p in params:
            if p.grad is not None:
                p.value.data -= self.lr * p.grad


class AdaptiveMoments:
    """Adam-style update with bias correction; state keyed by parameter name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ParameterSet):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in params:
            g = p.grad
            if g is None:
                continue
            m = self._m.setdefault(p.name, np.zeros_like(p.value.data))
            v = self._v.setdefault(p.name, np.zeros_like(p.value.data))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p.value.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return AdaptiveMoments(config.learning_rate, config.beta1, config.beta2, config.eps)


def stratified_split(
    examples: Sequence, fraction: float, seed: int, label_fn: Callable = lambda e: e.label
) -> tuple[list, list]:
    """Per-class split, deterministic given seed.

    The test quota n*(1-fraction) rounds half-up, and a class whose quota
    is an exact integer cedes one extra example to test (this reproduces
    the reference per-class counts); every class always keeps at least one
    example on each side.
    """
    by_class: dict[int, list] = {}
    for ex in examples:
        by_class.setdefault(label_fn(ex), []).append(ex)
    for cls, items in sorted(by_class.items()):
        if len(items) < 2:
            raise ValidationError(f"class {cls} has {len(items)} example(s); need at least 2 to split")
    rng = substream(seed, "split")
    train, test = [], []
    for cls in sorted(by_class):
        items = by_class[cls]
        n = len(items)
        # Snap to 9 decimals so fractions like 1 - 0.9 behave as written.
        quota = round(n * (1.0 - fraction), 9)
        base = math.floor(quota)
        frac = quota - base
        n_test = base if 0.0 < frac < 0.5 else base + 1
        n_test = min(max(n_test, 1), n - 1)
        order = rng.permutation(n)
        test.extend(items[i] for i in order[:n_test])
        train.extend(items[i] for i in order[n_test:])
    return train, test


def _batch_loss(model: MoEmoModel, batch: list[Example]) -> ad.Tensor:
    """Mean cross-entropy over the batch, one fused loss node."""
    cfg = model.config
    if cfg.uses_context:
        fmaps = [ex.context_map() for ex in batch]
        if any(f is None for f in fmaps):
            raise ValidationError("variant requires context features, but an example has none")
        tokens = ctx_mod.embed_context_batch(
            fmaps, model.params, rows=cfg.context_rows, cols=cfg.context_cols
        )
    else:
        tokens = [None] * len(batch)
    logits = [model.forward(ex.vectors, tok) for ex, tok in zip(batch, tokens)]
    stacked = logits[0] if len(logits) == 1 else ad.concat(logits, axis=0)
    labels = np.array([ex.label for ex in batch], dtype=np.int64)
    return ad.cross_entropy_with_softmax(stacked, labels)


def train(
    model: MoEmoModel,
    train_set: Sequence[Example],
    config: TrainConfig,
    progress: Optional[Callable[[int, float], None]] = None,
) -> tuple[ParameterSet, list[float]]:
    """Optimize the model's parameters in place; returns (params, loss curve).

    The loss curve holds the mean training loss per epoch. Aborts with an
    error as divergence guard if the loss stops being finite.
    """
    if not train_set:
        raise ValidationError("empty training set")
    examples = list(train_set)
    optimizer = make_optimizer(config)
    shuffle_rng = substream(config.seed, "shuffle")
    curve: list[float] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(examples))
        total, count = 0.0, 0
        for start in range(0, len(examples), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            model.params.zero_grad()
            loss = _batch_loss(model, batch)
            value = loss.item()
            if not math.isfinite(value):
                raise MoemoError(f"training diverged: non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step(model.params)
            total += value * len(batch)
            count += len(batch)
        curve.append(total / count)
        if progress is not None:
            progress(epoch, curve[-1])
    return model.params, curve


def predict_labels(model: MoEmoModel, examples: Sequence[Example], batch_size: int = 64) -> np.ndarray:
    """Argmax class per example (ties break toward the lowest index)."""
    preds = np.empty(len(examples), dtype=np.int64)
    cfg = model.config
    with ad.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = list(examples[start:start + batch_size])
            if cfg.uses_context:
                fmaps = [ex.context_map() for ex in batch]
                tokens = ctx_mod.embed_context_batch(
                    fmaps, model.params, rows=cfg.context_rows, cols=cfg.context_cols
                )
            else:
                tokens = [None] * len(batch)
            for j, (ex, tok) in enumerate(zip(batch, tokens)):
                logits = model.forward(ex.vectors, tok)
                preds[start + j] = int(np.argmax(logits.data[0]))
    return preds


def confusion_matrix(labels: np.ndarray, preds: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape:
        raise ValidationError(f"labels/preds length mismatch: {labels.shape} vs {preds.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def report_from_confusion(cm: np.ndarray) -> EvalReport:
    """Accuracy, per-class recall, and macro-F1 from a confusion matrix.

    Per-class accuracy is recall (diagonal over row sum). F1 is 2PR/(P+R),
    0 when P+R is 0; classes with zero support are excluded from the macro
    mean.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValidationError("empty confusion matrix")
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    diag = np.diag(cm)
    per_class_acc = [float(diag[c] / support[c]) if support[c] else 0.0 for c in range(cm.shape[0])]
    per_class_f1 = []
    for c in range(cm.shape[0]):
        precision = diag[c] / predicted[c] if predicted[c] else 0.0
        recall = diag[c] / support[c] if support[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class_f1.append(float(f1))
    supported = [c for c in range(cm.shape[0]) if support[c] > 0]
    macro_f1 = float(np.mean([per_class_f1[c] for c in supported]))
    return EvalReport(
        overall_accuracy=float(diag.sum() / total),
        macro_f1=macro_f1,
        per_class_accuracy=per_class_acc,
        per_class_f1=per_class_f1,
        confusion=cm,
        n_examples=total,
    )


def evaluate(model: MoEmoModel, test_set: Sequence[Example]) -> EvalReport:
    if not test_set:
        raise ValidationError("empty test set")
    labels = np.array([ex.label for ex in test_set], dtype=np.int64)
    preds = predict_labels(model, list(test_set))
    return report_from_confusion(confusion_matrix(labels, preds))


def report_to_text(report: EvalReport) -> str:
    lines = [
        f"examples          {report.n_examples}",
        f"overall accuracy  {report.overall_accuracy:.4f}",
        f"macro F1          {report.macro_f1:.4f}",
        "",
        f"{'class':<10}{'accuracy':>10}{'f1':>10}",
    ]
    for c, name in enumerate(EMOTION_CLASSES):
        lines.append(f"{name:<10}{report.per_class_accuracy[c]:>10.4f}{report.per_class_f1[c]:>10.4f}")
    lines.append("")
    lines.append("confusion (rows = true, cols = predicted):")
    header = "          " + "".join(f"{n[:4]:>6}" for n in EMOTION_CLASSES)
    lines.append(header)
    for c, name in enumerate(EMOTION_CLASSES):
        lines.append(f"{name:<10}" + "".join(f"{int(v):>6}" for v in report.confusion[c]))
    return "\n".join(lines) + "\n"


def report_to_csv(report: EvalReport) -> str:
    lines = ["metric,class,value"]
    lines.append(f"overall_accuracy,,{report.overall_accuracy!r}")
    lines.append(f"macro_f1,,{report.macro_f1!r}")
    lines.append(f"n_examples,,{report.n_examples}")
    for c, name in enumerate(EMOTION_CLASSES):
        lines.append(f"per_class_accuracy,{name},{report.per_class_accuracy[c]!r}")
        lines.append(f"per_class_f1,{name},{report.per_class_f1[c]!r}")
    for i, true_name in enumerate(EMOTION_CLASSES):
        for j, pred_name in enumerate(EMOTION_CLASSES):
            lines.append(f"confusion,{true_name}:{pred_name},{int(report.confusion[i, j])}")
    return "\n".join(lines) + "\n"


def loss_curve_to_csv(curve: Sequence[float]) -> str:
    lines = ["epoch,mean_train_loss"]
    lines.extend(f"{i},{v!r}" for i, v in enumerate(curve))
    return "\n".join(lines) + "\n"
