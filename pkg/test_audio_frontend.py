"""
Test script for the stub audio encoder and projection
=====================================================
"""

from pathlib import Path

import numpy as np
import pytest

from audio_frontend import AudioClipRef, FrontendConfig, encode_audio, pool_frames, project
from errors import CorruptFeature, DimensionError
from numerics import Tensor, ordered_matmul
from persistence import write_features


def clip_with(tmp_path, features, name="clip"):
    path = write_features(tmp_path / f"{name}.aftr", features)
    return AudioClipRef(id=name, feature_path=str(path))


def test_constant_frames_pool_to_the_same_vector(tmp_path):
    v = np.array([1.0, -2.0, 0.5])
    clip = clip_with(tmp_path, np.tile(v, (4, 1)))
    h = encode_audio(clip, FrontendConfig(audio_slot_count=2, d_audio=3))
    np.testing.assert_array_equal(h.data, np.stack([v, v]))


def test_window_means(tmp_path):
    frames = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 8.0], [7.0, 0.0]])
    clip = clip_with(tmp_path, frames)
    h = encode_audio(clip, FrontendConfig(audio_slot_count=2, d_audio=2))
    np.testing.assert_array_equal(h.data, [[2.0, 3.0], [6.0, 4.0]])


def test_slot_count_equal_to_frames_is_identity(tmp_path):
    frames = np.arange(12, dtype=float).reshape(4, 3)
    h = encode_audio(clip_with(tmp_path, frames), FrontendConfig(audio_slot_count=4, d_audio=3))
    np.testing.assert_array_equal(h.data, frames)


def test_last_window_absorbs_remainder():
    frames = np.arange(7, dtype=float).reshape(7, 1)
    pooled = pool_frames(frames, 3)
    np.testing.assert_array_equal(pooled[:, 0], [0.5, 2.5, 5.0])


def test_short_clips_still_give_k_rows():
    frames = np.array([[1.0], [2.0], [3.0]])
    pooled = pool_frames(frames, 8)
    assert pooled.shape == (8, 1)
    np.testing.assert_array_equal(pooled[:, 0], [1, 1, 1, 2, 2, 2, 3, 3])


def test_encode_is_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    clip = clip_with(tmp_path, rng.normal(size=(20, 16)))
    cfg = FrontendConfig()
    assert np.array_equal(encode_audio(clip, cfg).data, encode_audio(clip, cfg).data)


def test_nan_features_are_corrupt(tmp_path):
    frames = np.ones((4, 2))
    frames[1, 0] = np.nan
    with pytest.raises(CorruptFeature):
        encode_audio(clip_with(tmp_path, frames), FrontendConfig(audio_slot_count=2, d_audio=2))


def test_missing_or_truncated_file_is_corrupt(tmp_path):
    missing = AudioClipRef(id="gone", feature_path=str(tmp_path / "gone.aftr"))
    with pytest.raises(CorruptFeature):
        encode_audio(missing, FrontendConfig())

    clip = clip_with(tmp_path, np.ones((4, 16)))
    path = Path(clip.feature_path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CorruptFeature):
        encode_audio(clip, FrontendConfig())


def test_wrong_feature_dim(tmp_path):
    with pytest.raises(DimensionError):
        encode_audio(clip_with(tmp_path, np.ones((4, 5))), FrontendConfig(d_audio=16))


def test_identity_projection():
    h = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
    block = project(h, Tensor(np.eye(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(block.slots.data, h.data)
    assert block.slot_count == 3


def test_zero_input_gives_bias_rows():
    bias = Tensor(np.array([0.5, -1.0, 2.0]))
    block = project(Tensor(np.zeros((4, 2))), Tensor(np.ones((2, 3))), bias)
    np.testing.assert_array_equal(block.slots.data, np.tile(bias.data, (4, 1)))


def test_projection_matches_matmul_oracle_and_is_linear():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    w, bias = Tensor(rng.normal(size=(4, 6))), Tensor(rng.normal(size=6))

    out = project(Tensor(a), w, bias).slots.data
    np.testing.assert_array_equal(out, ordered_matmul(a, w.data) + bias.data)

    lhs = project(Tensor(a + b), w, bias).slots.data
    rhs = out + project(Tensor(b), w, bias).slots.data - bias.data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_projection_shape_errors():
    with pytest.raises(DimensionError):
        project(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))), Tensor(np.zeros(5)))
    with pytest.raises(DimensionError):
        project(Tensor(np.ones((2, 4))), Tensor(np.ones((4, 5))), Tensor(np.zeros(3)))


def test_clip_ref_round_trip_and_validation():
    ref = AudioClipRef(id="a", feature_path="x.aftr", duration_s=10.0)
    assert AudioClipRef.from_dict(ref.to_dict()) == ref
    with pytest.raises(ValueError):
        AudioClipRef.from_dict({"id": "a", "feature_path": "x", "duration_s": 0})


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
