import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moemo.errors import ValidationError
from moemo.motion import (
    EMOTION_CLASSES,
    KeypointClip,
    PersonTrack,
    label_index,
    movement_vectors,
    resample,
    root_center,
    split_persons,
)


def make_clip(n_persons=1, f=16, fps=30.0, seed=0, clip_id="c0"):
    rng = np.random.default_rng(seed)
    persons = [PersonTrack(i, rng.standard_normal((f, 17, 3))) for i in range(n_persons)]
    return KeypointClip(clip_id=clip_id, source_fps=fps, persons=persons)


class TestValidation:
    def test_rejects_empty_persons(self):
        with pytest.raises(ValidationError, match="empty persons"):
            KeypointClip(clip_id="x", source_fps=30, persons=[])

    def test_rejects_mismatched_frame_counts(self):
        a = PersonTrack(0, np.zeros((4, 17, 3)))
        b = PersonTrack(1, np.zeros((5, 17, 3)))
        with pytest.raises(ValidationError, match="disagree"):
            KeypointClip(clip_id="x", source_fps=30, persons=[a, b])

    def test_rejects_wrong_joint_shape(self):
        with pytest.raises(ValidationError, match="joints"):
            PersonTrack(0, np.zeros((4, 16, 3)))

    def test_rejects_nan_joints(self):
        joints = np.zeros((4, 17, 3))
        joints[1, 3, 2] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            PersonTrack(0, joints)

    def test_rejects_single_frame(self):
        with pytest.raises(ValidationError, match="too few frames"):
            KeypointClip(clip_id="x", source_fps=30, persons=[PersonTrack(0, np.zeros((1, 17, 3)))])

    def test_label_vocabulary(self):
        assert EMOTION_CLASSES == ("joy", "angry", "disgust", "fear", "sadness", "surprise")
        assert label_index("disgust") == 2
        with pytest.raises(ValidationError):
            label_index("bored")


class TestResample:
    def test_30fps_to_4hz_indices(self):
        # floor(k * 30/4) for k = 0..15
        clip = make_clip(f=120, fps=30.0)
        out = resample(clip, target_hz=4.0, max_frames=16)
        expected_idx = [math.floor(k * 7.5) for k in range(16)]
        assert expected_idx == [0, 7, 15, 22, 30, 37, 45, 52, 60, 67, 75, 82, 90, 97, 105, 112]
        assert out.n_frames == 16
        np.testing.assert_array_equal(out.persons[0].joints, clip.persons[0].joints[expected_idx])
        assert out.source_fps == 4.0

    def test_identity_when_rates_match(self):
        clip = make_clip(f=16, fps=4.0)
        out = resample(clip, target_hz=4.0, max_frames=16)
        np.testing.assert_array_equal(out.persons[0].joints, clip.persons[0].joints)

    def test_too_few_surviving_frames(self):
        clip = make_clip(f=4, fps=30.0)
        with pytest.raises(ValidationError, match="too few frames"):
            resample(clip, target_hz=4.0)

    def test_rate_error(self):
        clip = make_clip(f=16, fps=2.0)
        with pytest.raises(ValidationError, match="below target rate"):
            resample(clip, target_hz=4.0)

    def test_idempotent(self):
        clip = make_clip(f=200, fps=25.0, seed=3)
        once = resample(clip)
        twice = resample(once)
        np.testing.assert_array_equal(once.persons[0].joints, twice.persons[0].joints)

    def test_all_persons_resampled_identically(self):
        clip = make_clip(n_persons=3, f=60, fps=12.0)
        out = resample(clip)
        for orig, res in zip(clip.persons, out.persons):
            np.testing.assert_array_equal(res.joints, orig.joints[[math.floor(k * 3) for k in range(out.n_frames)]])

    def test_short_clip_accepted_if_two_frames_survive(self):
        clip = make_clip(f=5, fps=4.0)
        assert resample(clip).n_frames == 5


class TestSplitPersons:
    def test_single_person_identity(self):
        clip = make_clip(n_persons=1)
        [(pid, track)] = split_persons(clip)
        assert pid == 0
        assert track is clip.persons[0]

    def test_three_persons(self):
        clip = make_clip(n_persons=3)
        out = split_persons(clip)
        assert [pid for pid, _ in out] == [0, 1, 2]
        assert len({t.n_frames for _, t in out}) == 1


class TestMovementVectors:
    def test_shape_f16(self):
        seq = movement_vectors(make_clip(f=16).persons[0])
        assert seq.vectors.shape == (15, 17, 6)

    def test_static_track_zero_displacement(self):
        joints = np.tile(np.arange(51.0).reshape(1, 17, 3), (5, 1, 1))
        seq = movement_vectors(PersonTrack(0, joints))
        np.testing.assert_array_equal(seq.vectors[..., :3], seq.vectors[..., 3:])

    def test_two_frame_concatenation(self):
        joints = np.zeros((2, 17, 3))
        joints[1, 4] = [1.0, 2.0, 3.0]
        seq = movement_vectors(PersonTrack(0, joints))
        np.testing.assert_array_equal(seq.vectors[0, 4], [0, 0, 0, 1, 2, 3])

    def test_too_few_frames(self):
        track = PersonTrack.__new__(PersonTrack)
        track.person_id = 0
        track.joints = np.zeros((1, 17, 3))
        with pytest.raises(ValidationError, match="too few frames"):
            movement_vectors(track)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10_000))
    def test_bitwise_reconstruction(self, f, seed):
        joints = np.random.default_rng(seed).standard_normal((f, 17, 3))
        seq = movement_vectors(PersonTrack(0, joints))
        assert seq.vectors.shape == (f - 1, 17, 6)
        rebuilt = np.concatenate([seq.vectors[:, :, :3], seq.vectors[-1:, :, 3:]], axis=0)
        assert (rebuilt == joints).all()

    def test_split_commutes_with_movement_vectors(self):
        clip = make_clip(n_persons=3, f=8, seed=7)
        joint_array = np.stack([p.joints for p in clip.persons])
        for (pid, track), joints in zip(split_persons(clip), joint_array):
            a = movement_vectors(track).vectors
            b = movement_vectors(PersonTrack(pid, joints)).vectors
            assert (a == b).all()


def test_root_center_is_opt_in_and_centers():
    track = make_clip(f=4, seed=5).persons[0]
    centered = root_center(track)
    np.testing.assert_allclose(centered.joints.mean(axis=1), 0.0, atol=1e-12)
    assert not np.allclose(track.joints.mean(axis=1), 0.0)
