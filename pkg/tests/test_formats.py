import json

import numpy as np
import pytest

from moemo import formats
from moemo.context import ContextFeatureMap
from moemo.dataset import load_examples, write_synth_dataset
from moemo.errors import FormatError, ValidationError
from moemo.model import ModelConfig, init_params
from moemo.motion import KeypointClip, PersonTrack
from moemo.synth import SynthConfig, generate


def make_clip(rng, clip_id="clipA", persons=2, frames=5, fps=30.0, label=3):
    tracks = [PersonTrack(i, rng.standard_normal((frames, 17, 3))) for i in range(persons)]
    return KeypointClip(clip_id=clip_id, source_fps=fps, persons=tracks, label=label)


class TestKeypointFiles:
    def test_round_trip_bitwise(self, tmp_path, rng):
        clip = make_clip(rng)
        path = tmp_path / "a.mokp"
        formats.write_mokp(path, clip)
        back = formats.read_mokp(path, label=clip.label)
        assert back.clip_id == clip.clip_id
        assert back.source_fps == clip.source_fps
        assert back.n_persons == 2 and back.n_frames == 5
        for orig, read in zip(clip.persons, back.persons):
            assert (orig.joints == read.joints).all()

    def test_truncated_fails_cleanly(self, tmp_path, rng):
        path = tmp_path / "a.mokp"
        formats.write_mokp(path, make_clip(rng))
        data = path.read_bytes()
        for cut in (0, 3, 8, 20, len(data) - 1):
            path.write_bytes(data[:cut])
            with pytest.raises(FormatError, match="truncated"):
                formats.read_mokp(path)

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        path = tmp_path / "a.mokp"
        formats.write_mokp(path, make_clip(rng))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            formats.read_mokp(path)

    def test_bad_magic_and_version(self, tmp_path, rng):
        path = tmp_path / "a.mokp"
        formats.write_mokp(path, make_clip(rng))
        data = bytearray(path.read_bytes())
        good = bytes(data)
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            formats.read_mokp(path)
        data = bytearray(good)
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            formats.read_mokp(path)

    def test_nonfinite_payload_rejected(self, tmp_path, rng):
        clip = make_clip(rng, frames=3)
        path = tmp_path / "a.mokp"
        formats.write_mokp(path, clip)
        data = bytearray(path.read_bytes())
        # Overwrite the last value with NaN.
        data[-8:] = np.float64(np.nan).tobytes()
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            formats.read_mokp(path)


class TestContextFiles:
    def test_round_trip_bitwise(self, tmp_path, rng):
        # Payload is stored as f32; write f32-representable values so the
        # round trip is exact.
        frames = rng.standard_normal((4, 50, 768)).astype(np.float32).astype(np.float64)
        fmap = ContextFeatureMap(clip_id="c1", frames=frames)
        path = tmp_path / "c.mocx"
        formats.write_mocx(path, fmap)
        back = formats.read_mocx(path)
        assert back.clip_id == "c1"
        assert back.frames.dtype == np.float64
        assert (back.frames == frames).all()

    def test_truncated_fails_cleanly(self, tmp_path, rng):
        frames = rng.standard_normal((2, 50, 768))
        path = tmp_path / "c.mocx"
        formats.write_mocx(path, ContextFeatureMap("c1", frames))
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(FormatError, match="truncated"):
            formats.read_mocx(path)


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = ModelConfig(d_model=16, n_blocks=2, n_heads=2, context_hidden=8)
        params = init_params(cfg, seed=7)
        path = tmp_path / "m.moem"
        formats.write_checkpoint(path, cfg, params)
        cfg2, state = formats.read_checkpoint(path)
        assert cfg2 == cfg
        assert set(state) == set(params.names())
        for p in params:
            assert (state[p.name] == p.value.data).all()

    def test_load_state_restores_model(self, tmp_path):
        cfg = ModelConfig(d_model=16, n_blocks=1, n_heads=2, context_hidden=8, variant="no_context")
        params = init_params(cfg, seed=3)
        path = tmp_path / "m.moem"
        formats.write_checkpoint(path, cfg, params)
        cfg2, state = formats.read_checkpoint(path)
        fresh = init_params(cfg2, seed=99)
        fresh.load_state(state)
        for a, b in zip(params, fresh):
            assert (a.value.data == b.value.data).all()

    def test_truncated_fails_cleanly(self, tmp_path):
        cfg = ModelConfig(d_model=8, n_blocks=1, n_heads=1, context_hidden=4, variant="no_context")
        path = tmp_path / "m.moem"
        formats.write_checkpoint(path, cfg, init_params(cfg, seed=0))
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError, match="truncated|trailing"):
            formats.read_checkpoint(path)

    def test_bad_config_block(self, tmp_path):
        cfg = ModelConfig(d_model=8, n_blocks=1, n_heads=1, context_hidden=4, variant="no_context")
        path = tmp_path / "m.moem"
        formats.write_checkpoint(path, cfg, init_params(cfg, seed=0))
        data = path.read_bytes()
        bad = data.replace(b'"d_model"', b'"x_model"')
        path.write_bytes(bad)
        with pytest.raises(FormatError, match="config"):
            formats.read_checkpoint(path)


class TestManifest:
    def entry(self, i):
        return formats.ManifestEntry(
            clip_id=f"c{i}", keypoint_file=f"k{i}.mokp",
            context_file=f"x{i}.mocx", label="joy",
        )

    def test_round_trip(self, tmp_path):
        m = formats.Manifest(dataset="d", clips=[self.entry(0), self.entry(1)])
        path = tmp_path / "manifest.json"
        formats.write_manifest(path, m)
        back = formats.read_manifest(path)
        assert back.dataset == "d"
        assert [c.clip_id for c in back.clips] == ["c0", "c1"]
        assert back.clips[0].label_index == 0

    def test_duplicate_clip_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            formats.Manifest(dataset="d", clips=[self.entry(0), self.entry(0)])

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{nope")
        with pytest.raises(FormatError, match="JSON"):
            formats.read_manifest(path)

    def test_missing_key(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"format_version": 1, "clips": [{"clip_id": "a"}]}))
        with pytest.raises(FormatError, match="keypoint_file"):
            formats.read_manifest(path)


class TestConfigText:
    def test_parse(self):
        text = "# comment\nmodel.d_model = 64\n\ntrain.epochs=3 # inline\n"
        assert formats.parse_config_text(text) == {"model.d_model": "64", "train.epochs": "3"}

    def test_bad_line(self):
        with pytest.raises(FormatError, match="line 2"):
            formats.parse_config_text("a=1\nnot a pair\n")


class TestDatasetRoundTrip:
    def test_write_validate_load(self, tmp_path):
        clips = generate(SynthConfig(n_clips=12, frames=4, seed=11))
        manifest = write_synth_dataset(tmp_path / "ds", clips, dataset_name="t")
        assert formats.validate_dataset(manifest) == []
        examples = load_examples(manifest)
        assert len(examples) == 12
        by_id = {sc.clip.clip_id: sc for sc in clips}
        for ex in examples:
            clip_id = ex.clip_id.split("/")[0]
            src = by_id[clip_id]
            assert ex.label == src.label
            assert ex.vectors.vectors.shape == (3, 17, 6)
            fmap = ex.context_map()
            assert fmap.n_frames == 4
            # f32 storage quantizes; match at that precision.
            np.testing.assert_allclose(fmap.frames, src.context.frames, rtol=0, atol=1e-6)

    def test_validate_flags_corruption(self, tmp_path):
        clips = generate(SynthConfig(n_clips=6, frames=4, seed=2))
        manifest = write_synth_dataset(tmp_path / "ds", clips)
        victim = tmp_path / "ds" / "keypoints" / f"{clips[0].clip.clip_id}.mokp"
        victim.write_bytes(victim.read_bytes()[:10])
        problems = formats.validate_dataset(manifest)
        assert len(problems) == 1
        assert clips[0].clip.clip_id in problems[0]

    def test_validate_flags_frame_mismatch(self, tmp_path):
        clips = generate(SynthConfig(n_clips=3, frames=4, seed=2))
        manifest = write_synth_dataset(tmp_path / "ds", clips)
        short = ContextFeatureMap(clips[0].clip.clip_id, clips[0].context.frames[:2])
        formats.write_mocx(tmp_path / "ds" / "context" / f"{clips[0].clip.clip_id}.mocx", short)
        problems = formats.validate_dataset(manifest)
        assert any("frames" in p for p in problems)

    def test_missing_label_raises_unless_allowed(self, tmp_path):
        clips = generate(SynthConfig(n_clips=3, frames=4, seed=2))
        manifest = write_synth_dataset(tmp_path / "ds", clips)
        doc = json.loads(manifest.read_text())
        del doc["clips"][0]["label"]
        manifest.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="label"):
            load_examples(manifest)
        examples = load_examples(manifest, require_labels=False)
        assert len(examples) == 3
        assert examples[0].label == -1
