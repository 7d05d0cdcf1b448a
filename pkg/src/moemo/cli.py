"""Command-line surface.

Subcommands:
  synth     generate a synthetic dataset (MOKP/MOCX files + manifest)
  vectors   convert keypoint files to movement-vector files, printing shapes
  train     stratified split, train, evaluate, write run artifacts
  eval      evaluate a checkpoint against a manifest
  ablate    train all three variants and print a comparison table
  validate  check a manifest and every file it references

Global flags: --config (key=value file), --seed, --out. Command-line
flags override config-file values, which override built-in defaults.
Config file keys mirror the dataclass fields with a prefix, e.g.
model.d_model, model.variant, train.epochs, train.learning_rate,
synth.n_clips, synth.noise_sigma.

Exit codes: 0 success, 1 validation/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset as dataset_mod
from . import formats, training
from .errors import MoemoError, ValidationError
from .model import ModelConfig, MoEmoModel, VARIANTS
from .synth import SynthConfig, bayes_gap, coarse_context_optimum, generate_stream
from .training import TrainConfig, evaluate, stratified_split, train


def _coerce(value: str, typ):
    if typ is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"expected a boolean, got {value!r}")
    return typ(value)


def _config_from_sources(cls, prefix: str, file_values: dict[str, str], overrides: dict):
    """defaults < config file (prefixed keys) < explicit CLI overrides."""
    kwargs = {}
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    types = {name: type(getattr(cls(), name)) for name in fields}
    for key, raw in file_values.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in fields:
            raise ValidationError(f"unknown config key {key!r}")
        kwargs[name] = _coerce(raw, types[name])
    for name, value in overrides.items():
        if value is not None:
            kwargs[name] = value
    return cls(**kwargs)


def _read_config_flag(args) -> dict[str, str]:
    if getattr(args, "config", None):
        return formats.read_config_file(Path(args.config))
    return {}


def _model_config(args, file_values) -> ModelConfig:
    return _config_from_sources(ModelConfig, "model", file_values, {
        "d_model": args.d_model,
        "n_blocks": args.n_blocks,
        "n_heads": args.n_heads,
        "variant": getattr(args, "variant", None),
        "context_hidden": args.context_hidden,
    })


def _train_config(args, file_values) -> TrainConfig:
    return _config_from_sources(TrainConfig, "train", file_values, {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "optimizer": args.optimizer,
        "split_fraction": args.split_fraction,
        "seed": args.seed,
    })


def _add_model_flags(p: argparse.ArgumentParser, with_variant=True):
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--n-blocks", type=int, dest="n_blocks")
    p.add_argument("--n-heads", type=int, dest="n_heads")
    p.add_argument("--context-hidden", type=int, dest="context_hidden")
    if with_variant:
        p.add_argument("--variant", choices=VARIANTS)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--optimizer", choices=("sgd", "adaptive_moments"))
    p.add_argument("--split-fraction", type=float, dest="split_fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moemo", description="Motion-to-emotion toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", metavar="DIR", default=None)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n-clips", type=int, dest="n_clips")
    p.add_argument("--frames", type=int)
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.add_argument("--interaction-fraction", type=float, dest="interaction_fraction")
    p.add_argument("--name", default="synthetic")

    p = sub.add_parser("vectors", parents=[common], help="keypoints to movement vectors")
    p.add_argument("manifest")
    p.add_argument("--target-hz", type=float, default=4.0, dest="target_hz")
    p.add_argument("--max-frames", type=int, default=16, dest="max_frames")

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("manifest")
    _add_model_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("manifest")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("ablate", parents=[common], help="compare the three variants")
    p.add_argument("manifest")
    p.add_argument("--n-seeds", type=int, default=1, dest="n_seeds")
    _add_model_flags(p, with_variant=False)
    _add_train_flags(p)

    p = sub.add_parser("validate", parents=[common], help="validate a manifest and its files")
    p.add_argument("manifest")
    return parser


def cmd_synth(args) -> int:
    file_values = _read_config_flag(args)
    cfg = _config_from_sources(SynthConfig, "synth", file_values, {
        "n_clips": args.n_clips,
        "frames": args.frames,
        "noise_sigma": args.noise_sigma,
        "interaction_fraction": args.interaction_fraction,
        "seed": args.seed,
    })
    out = Path(args.out or "synth_dataset")
    manifest = dataset_mod.write_synth_dataset(out, generate_stream(cfg), dataset_name=args.name)
    with_ctx, motion_only = bayes_gap(cfg)
    print(f"wrote {cfg.n_clips} clips to {out}")
    print(f"manifest: {manifest}")
    print(
        f"planted optimum: with context {with_ctx:.3f}, "
        f"coarse cue only {coarse_context_optimum(cfg):.3f}, motion only {motion_only:.3f}"
    )
    return 0


def cmd_vectors(args) -> int:
    examples = dataset_mod.load_examples(
        Path(args.manifest), target_hz=args.target_hz, max_frames=args.max_frames,
        require_labels=False,
    )
    out_dir = Path(args.out) if args.out else None
    for ex in examples:
        print(f"{ex.clip_id}: {ex.vectors.vectors.shape}")
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            np.save(out_dir / (ex.clip_id.replace("/", "_") + ".npy"), ex.vectors.vectors)
    return 0


def _split_examples(manifest: Path, tc: TrainConfig):
    examples = dataset_mod.load_examples(manifest)
    return stratified_split(examples, tc.split_fraction, tc.seed)


def _train_one(manifest: Path, mc: ModelConfig, tc: TrainConfig, quiet=False):
    train_set, test_set = _split_examples(manifest, tc)
    model = MoEmoModel(mc, seed=tc.seed)
    t0 = time.time()

    def progress(epoch, loss):
        if not quiet:
            print(f"  epoch {epoch}: loss {loss:.4f}  ({time.time() - t0:.1f}s)", flush=True)

    _, curve = train(model, train_set, tc, progress=progress)
    report = evaluate(model, test_set)
    return model, curve, report


def cmd_train(args) -> int:
    file_values = _read_config_flag(args)
    mc = _model_config(args, file_values)
    tc = _train_config(args, file_values)
    manifest = Path(args.manifest)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)

    model, curve, report = _train_one(manifest, mc, tc)
    checkpoint = out / "checkpoint.moem"
    formats.write_checkpoint(checkpoint, mc, model.params)
    formats.atomic_write_text(out / "loss_curve.csv", training.loss_curve_to_csv(curve))
    formats.atomic_write_text(out / "metrics.txt", training.report_to_text(report))
    formats.atomic_write_text(out / "metrics.csv", training.report_to_csv(report))
    formats.write_run_record(out / "run_record.json", formats.RunRecord(
        run_id=f"train-{manifest.stem}-seed{tc.seed}",
        seed=tc.seed,
        model_config=dataclasses.asdict(mc),
        train_config=dataclasses.asdict(tc),
        input_hash=formats.sha256_file(manifest),
        metrics={"overall_accuracy": report.overall_accuracy, "macro_f1": report.macro_f1},
        checkpoint_path=str(checkpoint),
    ))
    print(training.report_to_text(report))
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    mc, state = formats.read_checkpoint(Path(args.checkpoint))
    model = MoEmoModel(mc, seed=0)
    model.params.load_state(state)
    examples = dataset_mod.load_examples(Path(args.manifest))
    report = evaluate(model, examples)
    print(training.report_to_text(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        formats.atomic_write_text(out / "metrics.txt", training.report_to_text(report))
        formats.atomic_write_text(out / "metrics.csv", training.report_to_csv(report))
    return 0


def run_ablation(manifest: Path, mc_base: ModelConfig, tc_base: TrainConfig, n_seeds: int, quiet=True):
    """Train every variant for each seed; returns {variant: [accuracy per seed]}."""
    results: dict[str, list[float]] = {v: [] for v in VARIANTS}
    for s in range(n_seeds):
        tc = dataclasses.replace(tc_base, seed=tc_base.seed + s)
        for variant in VARIANTS:
            mc = dataclasses.replace(mc_base, variant=variant)
            _, _, report = _train_one(manifest, mc, tc, quiet=quiet)
            results[variant].append(report.overall_accuracy)
            if not quiet:
                print(f"seed {tc.seed} {variant}: accuracy {report.overall_accuracy:.3f}", flush=True)
    return results


def ablation_table(results: dict[str, list[float]]) -> tuple[str, str]:
    order = ["full", "no_cross_attention", "no_context"]
    text_lines = [f"{'variant':<22}{'mean acc':>10}{'per-seed':>30}"]
    csv_lines = ["variant,mean_accuracy,per_seed_accuracies"]
    for v in order:
        accs = results[v]
        mean = float(np.mean(accs))
        per_seed = " ".join(f"{a:.3f}" for a in accs)
        text_lines.append(f"{v:<22}{mean:>10.3f}{per_seed:>30}")
        csv_lines.append(f"{v},{mean!r},{';'.join(repr(a) for a in accs)}")
    return "\n".join(text_lines) + "\n", "\n".join(csv_lines) + "\n"


def cmd_ablate(args) -> int:
    file_values = _read_config_flag(args)
    args.variant = None
    mc = _model_config(args, file_values)
    tc = _train_config(args, file_values)
    out = Path(args.out or "ablation")
    out.mkdir(parents=True, exist_ok=True)
    results = run_ablation(Path(args.manifest), mc, tc, args.n_seeds, quiet=False)
    text, csv = ablation_table(results)
    print(text)
    formats.atomic_write_text(out / "ablation.txt", text)
    formats.atomic_write_text(out / "ablation.csv", csv)
    return 0


def cmd_validate(args) -> int:
    problems = formats.validate_dataset(Path(args.manifest))
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print("ok")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "vectors": cmd_vectors,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (MoemoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
