"""Assemble training examples from interchange files on disk.

Each person in each clip becomes one example; every person of a clip
shares the clip's context file. Context maps are loaded lazily so large
datasets stream from disk during training.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

from . import formats
from .errors import ValidationError
from .motion import movement_vectors, resample, root_center, split_persons
from .synth import SynthClip
from .training import Example


def write_synth_dataset(out_dir: Path, clips: Iterable[SynthClip], dataset_name: str = "synthetic") -> Path:
    """Write MOKP/MOCX files plus a manifest; returns the manifest path.

    Accepts any iterable, so a generate_stream() generator keeps memory
    flat for large datasets."""
    out_dir = Path(out_dir)
    (out_dir / "keypoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "context").mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in clips:
        kp = f"keypoints/{sc.clip.clip_id}.mokp"
        cx = f"context/{sc.clip.clip_id}.mocx"
        formats.write_mokp(out_dir / kp, sc.clip)
        formats.write_mocx(out_dir / cx, sc.context)
        entries.append(formats.ManifestEntry(
            clip_id=sc.clip.clip_id,
            keypoint_file=kp,
            context_file=cx,
            label=formats.label_name(sc.label),
            motion_archetype=sc.motion_archetype,
            context_archetype=sc.context_archetype,
        ))
    manifest_path = out_dir / "manifest.json"
    formats.write_manifest(manifest_path, formats.Manifest(dataset=dataset_name, clips=entries))
    return manifest_path


def load_examples(
    manifest_path: Path,
    target_hz: float = 4.0,
    max_frames: int = 16,
    center: bool = False,
    require_labels: bool = True,
) -> list[Example]:
    """Read, resample, split persons, and build movement-vector examples."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    manifest = formats.read_manifest(manifest_path)
    examples: list[Example] = []
    for entry in manifest.clips:
        label = entry.label_index
        if label is None and require_labels:
            raise ValidationError(f"clip {entry.clip_id}: missing label")
        clip = formats.read_mokp(base / entry.keypoint_file, label=label)
        clip = resample(clip, target_hz=target_hz, max_frames=max_frames)
        context_loader = None
        if entry.context_file is not None:
            ctx_path = base / entry.context_file
            n_frames = clip.n_frames
            clip_id = entry.clip_id

            def context_loader(path=ctx_path, n=n_frames, cid=clip_id):
                fmap = formats.read_mocx(path)
                if fmap.n_frames != n:
                    raise ValidationError(f"clip {cid}: context frames {fmap.n_frames} != resampled frames {n}")
                return fmap

        for person_id, track in split_persons(clip):
            if center:
                track = root_center(track)
            examples.append(Example(
                clip_id=f"{entry.clip_id}/p{person_id}",
                vectors=movement_vectors(track),
                label=-1 if label is None else label,
                context=context_loader,
            ))
    return examples
