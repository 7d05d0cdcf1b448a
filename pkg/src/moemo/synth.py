"""Deterministic synthetic dataset with a planted motion x context interaction.

Six motion archetypes are smooth sinusoidal joint trajectories; three
context archetypes are fixed random 50x768 feature-map templates. Labels
follow a fixed lookup rule over (motion, context) cells:

    k = round(6 * interaction_fraction) motion archetypes are
    "context-dependent": label(m, c) = (m + c) mod k for m < k.
    The remaining archetypes are motion-determined: label(m, c) = m.

The rule is a shipped constant (it never depends on the seed), so the
planted Bayes gap between context-aware and motion-only classifiers is
stable across runs. With the defaults (k = 3) a motion-only classifier
tops out near 2/3 while the label is a deterministic function of the
(motion, context) pair, so context closes the remaining gap.

Archetype templates are derived from fixed internal generator keys; the
user seed only drives noise and cell assignment order. Context archetype
identity is planted with an information gradient across frames: one
random non-final frame carries a coarse cue (archetype 0 versus {1, 2})
and only the final frame carries the full archetype identity; all other
frames hold a shared neutral template. A model that attends over every
context frame can recover the exact label, a model that only sees
transition-start frames (all but the final one) tops out at the coarse
optimum, and a motion-only model is capped by the lookup-rule ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context import PATCH_COLS, PATCH_ROWS, ContextFeatureMap
from .errors import ValidationError
from .motion import KeypointClip, PersonTrack
from .params import substream

N_MOTION = 6
N_CONTEXT = 3
N_CLASSES = 6

# Fixed internal keys for the shipped archetype templates (seed-independent).
_MOTION_KEY = 101
_CONTEXT_KEY = 202

# Planted context geometry: template magnitudes relative to unit
# feature noise. The coarse cue splits archetype 0 from {1, 2}; the fine
# (full-identity) template appears only on a clip's final frame and is
# deliberately high-contrast so it stands out among the frame tokens.
CONTEXT_TEMPLATE_SCALE = 1.0
FINE_TEMPLATE_SCALE = 4.0
MOTION_AMPLITUDE = 0.35


@dataclass
class SynthConfig:
    n_clips: int = 1200
    frames: int = 16
    noise_sigma: float = 0.05
    interaction_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.interaction_fraction <= 1.0:
            raise ValidationError(f"interaction_fraction must be in [0,1], got {self.interaction_fraction}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_clips < 1 or self.frames < 2:
            raise ValidationError("need n_clips >= 1 and frames >= 2")

    @property
    def n_interactive(self) -> int:
        return round(N_MOTION * self.interaction_fraction)


@dataclass
class SynthClip:
    clip: KeypointClip
    context: ContextFeatureMap
    label: int
    motion_archetype: int
    context_archetype: int


def planted_label(motion: int, context: int, n_interactive: int) -> int:
    """The shipped lookup rule mapping an archetype cell to its label."""
    if motion < n_interactive:
        return (motion + context) % n_interactive
    return motion


def _motion_archetypes():
    """Per-archetype base pose, joint amplitudes/phases, and frequency."""
    rng = np.random.default_rng([_MOTION_KEY])
    base = rng.uniform(-0.5, 0.5, size=(17, 3))
    base[:, 1] += np.linspace(1.7, 0.0, 17)  # rough head-to-ankle vertical spread
    amps = MOTION_AMPLITUDE * rng.uniform(0.3, 1.0, size=(N_MOTION, 17, 3))
    phases = rng.uniform(0.0, 2 * np.pi, size=(N_MOTION, 17, 3))
    freqs = np.linspace(0.25, 1.5, N_MOTION)  # Hz, distinct per archetype
    return base, amps, phases, freqs


def _context_archetypes(rows: int = PATCH_ROWS, cols: int = PATCH_COLS):
    """Fine (per-archetype), coarse (binary cue), and neutral templates."""
    rng = np.random.default_rng([_CONTEXT_KEY])
    fine = FINE_TEMPLATE_SCALE * rng.standard_normal((N_CONTEXT, rows, cols))
    coarse = CONTEXT_TEMPLATE_SCALE * rng.standard_normal((2, rows, cols))
    neutral = CONTEXT_TEMPLATE_SCALE * rng.standard_normal((rows, cols))
    return fine, coarse, neutral


def _cell_assignments(config: SynthConfig) -> list[tuple[int, int, int]]:
    """(motion, context, label) per clip; class-balanced by construction.

    Each label's quota is spread round-robin over that label's preimage
    cells, so per-class counts differ by at most one whenever n_clips is a
    multiple of the class count.
    """
    k = config.n_interactive
    preimage: dict[int, list[tuple[int, int]]] = {lbl: [] for lbl in range(N_CLASSES)}
    for m in range(N_MOTION):
        for c in range(N_CONTEXT):
            preimage[planted_label(m, c, k)].append((m, c))

    quotas = [config.n_clips // N_CLASSES] * N_CLASSES
    for lbl in range(config.n_clips % N_CLASSES):
        quotas[lbl] += 1

    cells: list[tuple[int, int, int]] = []
    for lbl in range(N_CLASSES):
        # Every label is reachable for any k: interactive labels live below
        # k and archetypes at or above k map to themselves.
        options = preimage[lbl]
        for i in range(quotas[lbl]):
            m, c = options[i % len(options)]
            cells.append((m, c, lbl))
    return cells


def generate_stream(config: SynthConfig):
    """Yield the synthetic clips one by one, bitwise deterministic given
    the seed. Context maps are large; streaming keeps memory flat when
    clips are written straight to disk."""
    base, amps, phases, freqs = _motion_archetypes()
    fine_templates, coarse_templates, neutral_template = _context_archetypes()
    cells = _cell_assignments(config)
    order = substream(config.seed, "synth.order").permutation(len(cells))

    fps = 4.0
    t = np.arange(config.frames) / fps
    for i, cell_idx in enumerate(order):
        m, c, label = cells[cell_idx]
        rng = substream(config.seed, f"synth.clip{i}")
        wave = np.sin(2 * np.pi * freqs[m] * t[:, None, None] + phases[m])
        joints = base + amps[m] * wave + config.noise_sigma * rng.standard_normal((config.frames, 17, 3))
        clip_id = f"synth{i:05d}"
        clip = KeypointClip(
            clip_id=clip_id,
            source_fps=fps,
            persons=[PersonTrack(0, joints)],
            label=label,
            context_ref=clip_id,
        )
        frames = np.tile(neutral_template, (config.frames, 1, 1))
        coarse_at = int(rng.integers(0, config.frames - 1))
        frames[coarse_at] = coarse_templates[0 if c == 0 else 1]
        frames[config.frames - 1] = fine_templates[c]
        frames += config.noise_sigma * rng.standard_normal(frames.shape)
        context = ContextFeatureMap(clip_id=clip_id, frames=frames)
        yield SynthClip(clip=clip, context=context, label=label,
                        motion_archetype=m, context_archetype=c)


def generate(config: SynthConfig) -> list[SynthClip]:
    """Materialize the full dataset; use generate_stream for large runs."""
    return list(generate_stream(config))


def bayes_gap(config: SynthConfig) -> tuple[float, float]:
    """Exact optimal accuracies (with context, motion only) by enumeration.

    Under the generative rule the label is a deterministic function of the
    (motion, context) cell, so the context-aware optimum is 1. The
    motion-only optimum picks the majority label within each motion
    archetype, weighted by the actual cell counts for this config.
    """
    cells = _cell_assignments(config)
    counts: dict[tuple[int, int], int] = {}
    for m, _, lbl in cells:
        counts[(m, lbl)] = counts.get((m, lbl), 0) + 1
    total = len(cells)
    correct = 0
    for m in range(N_MOTION):
        per_label = [counts.get((m, lbl), 0) for lbl in range(N_CLASSES)]
        correct += max(per_label)
    return 1.0, correct / total


def coarse_context_optimum(config: SynthConfig) -> float:
    """Exact optimal accuracy when only the motion archetype and the
    coarse context cue (archetype 0 versus {1, 2}) are observable, as for
    a model that never sees a clip's final context frame."""
    cells = _cell_assignments(config)
    counts: dict[tuple[int, bool, int], int] = {}
    for m, c, lbl in cells:
        key = (m, c != 0, lbl)
        counts[key] = counts.get(key, 0) + 1
    correct = 0
    for m in range(N_MOTION):
        for bit in (False, True):
            per_label = [counts.get((m, bit, lbl), 0) for lbl in range(N_CLASSES)]
            correct += max(per_label)
    return correct / len(cells)
