"""Interchange file formats and run-artifact persistence.

Binary layouts (all integers little-endian u32 unless noted):

  MOKP (keypoints):  magic "MOKP", version, clip_id (length + UTF-8),
                     source_fps f64, p, f, then p*f*17*3 f64 values.
  MOCX (context):    magic "MOCX", version, clip_id, T, rows, cols,
                     then T*rows*cols f32 values.
  MOEM (checkpoint): magic "MOEM", version, config JSON (length + UTF-8),
                     n_params, then per parameter: name (length + UTF-8),
                     rank, dims..., f64 values.

Every reader validates magic, version, dimensions, and finiteness, and
fails cleanly on truncated input without producing a partial object.
Writers go through temp-then-rename so files are always complete. The
manifest is JSON; run configuration files are plain key=value text.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .context import ContextFeatureMap
from .errors import FormatError, ValidationError
from .model import ModelConfig
from .motion import EMOTION_CLASSES, KeypointClip, PersonTrack, label_index
from .params import ParameterSet

FORMAT_VERSION = 1
_MOKP = b"MOKP"
_MOCX = b"MOCX"
_MOEM = b"MOEM"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.what}: truncated file (wanted {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def array(self, count: int, dtype) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype).copy()

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _string_bytes(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _check_magic(r: _Reader, magic: bytes):
    got = r.take(4)
    if got != magic:
        raise FormatError(f"{r.what}: bad magic {got!r}, expected {magic!r}")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"{r.what}: unsupported format version {version}")


def write_mokp(path: Path, clip: KeypointClip) -> None:
    parts = [_MOKP, struct.pack("<I", FORMAT_VERSION), _string_bytes(clip.clip_id)]
    parts.append(struct.pack("<dII", clip.source_fps, clip.n_persons, clip.n_frames))
    joints = np.stack([p.joints for p in clip.persons])  # [p, f, 17, 3]
    parts.append(np.ascontiguousarray(joints, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_mokp(path: Path, label: Optional[int] = None, context_ref: str = "") -> KeypointClip:
    r = _Reader(Path(path).read_bytes(), f"MOKP {path}")
    _check_magic(r, _MOKP)
    clip_id = r.string()
    fps, p, f = struct.unpack("<dII", r.take(16))
    joints = r.array(p * f * 17 * 3, "<f8").reshape(p, f, 17, 3)
    r.done()
    if p < 1:
        raise FormatError(f"MOKP {path}: empty persons list")
    try:
        persons = [PersonTrack(i, joints[i]) for i in range(p)]
        return KeypointClip(clip_id=clip_id, source_fps=fps, persons=persons,
                            label=label, context_ref=context_ref or clip_id)
    except ValidationError as exc:
        raise FormatError(f"MOKP {path}: {exc}") from exc


def write_mocx(path: Path, fmap: ContextFeatureMap) -> None:
    t, rows, cols = fmap.frames.shape
    parts = [_MOCX, struct.pack("<I", FORMAT_VERSION), _string_bytes(fmap.clip_id)]
    parts.append(struct.pack("<III", t, rows, cols))
    parts.append(np.ascontiguousarray(fmap.frames, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_mocx(path: Path) -> ContextFeatureMap:
    r = _Reader(Path(path).read_bytes(), f"MOCX {path}")
    _check_magic(r, _MOCX)
    clip_id = r.string()
    t, rows, cols = struct.unpack("<III", r.take(12))
    frames = r.array(t * rows * cols, "<f4").reshape(t, rows, cols)
    r.done()
    try:
        return ContextFeatureMap(clip_id=clip_id, frames=frames.astype(np.float64))
    except ValidationError as exc:
        raise FormatError(f"MOCX {path}: {exc}") from exc


def write_checkpoint(path: Path, config: ModelConfig, params: ParameterSet) -> None:
    config_json = json.dumps(dataclasses.asdict(config), sort_keys=True)
    parts = [_MOEM, struct.pack("<I", FORMAT_VERSION), _string_bytes(config_json)]
    parts.append(struct.pack("<I", len(params)))
    for p in params:
        parts.append(_string_bytes(p.name))
        arr = p.value.data
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_checkpoint(path: Path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes(), f"checkpoint {path}")
    _check_magic(r, _MOEM)
    try:
        config = ModelConfig(**json.loads(r.string()))
    except (json.JSONDecodeError, TypeError, ValidationError) as exc:
        raise FormatError(f"checkpoint {path}: bad config block: {exc}") from exc
    n_params = r.u32()
    state: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        state[name] = r.array(int(np.prod(dims)) if dims else 1, "<f8").reshape(dims)
    r.done()
    return config, state


@dataclass
class ManifestEntry:
    clip_id: str
    keypoint_file: str
    context_file: Optional[str]
    label: Optional[str]  # class name
    split_tag: Optional[str] = None
    motion_archetype: Optional[int] = None
    context_archetype: Optional[int] = None

    @property
    def label_index(self) -> Optional[int]:
        return None if self.label is None else label_index(self.label)


@dataclass
class Manifest:
    dataset: str
    clips: list[ManifestEntry]
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate clip_ids in manifest: {dupes}")


def write_manifest(path: Path, manifest: Manifest) -> None:
    doc = {
        "format_version": manifest.format_version,
        "dataset": manifest.dataset,
        "clips": [
            {k: v for k, v in dataclasses.asdict(entry).items() if v is not None}
            for entry in manifest.clips
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def read_manifest(path: Path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "clips" not in doc:
        raise FormatError(f"manifest {path}: missing 'clips'")
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"manifest {path}: unsupported format_version {doc.get('format_version')}")
    entries = []
    for raw in doc["clips"]:
        try:
            entries.append(ManifestEntry(
                clip_id=raw["clip_id"],
                keypoint_file=raw["keypoint_file"],
                context_file=raw.get("context_file"),
                label=raw.get("label"),
                split_tag=raw.get("split_tag"),
                motion_archetype=raw.get("motion_archetype"),
                context_archetype=raw.get("context_archetype"),
            ))
        except KeyError as exc:
            raise FormatError(f"manifest {path}: clip entry missing {exc}") from exc
    return Manifest(dataset=doc.get("dataset", ""), clips=entries)


def validate_dataset(manifest_path: Path) -> list[str]:
    """Check a manifest and every referenced file; returns human-readable
    problem descriptions (empty means valid)."""
    problems: list[str] = []
    base = Path(manifest_path).parent
    try:
        manifest = read_manifest(manifest_path)
    except (FormatError, OSError) as exc:
        return [str(exc)]
    for entry in manifest.clips:
        try:
            if entry.label is not None:
                label_index(entry.label)
            clip = read_mokp(base / entry.keypoint_file)
            if entry.context_file is not None:
                fmap = read_mocx(base / entry.context_file)
                if fmap.n_frames != clip.n_frames:
                    problems.append(
                        f"{entry.clip_id}: context has {fmap.n_frames} frames, keypoints have {clip.n_frames}"
                    )
        except (FormatError, ValidationError, OSError) as exc:
            problems.append(f"{entry.clip_id}: {exc}")
    return problems


def parse_config_text(text: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path: Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text("utf-8"))


@dataclass
class RunRecord:
    run_id: str
    seed: int
    model_config: dict
    train_config: dict
    input_hash: str
    metrics: dict
    checkpoint_path: Optional[str]


def write_run_record(path: Path, record: RunRecord) -> None:
    atomic_write_text(path, json.dumps(dataclasses.asdict(record), indent=2, sort_keys=True) + "\n")


def label_name(index: int) -> str:
    return EMOTION_CLASSES[index]
