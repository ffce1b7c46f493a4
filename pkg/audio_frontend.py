"""
Audio frontend - stub encoder and projection
============================================

encode_audio stands in for the frozen audio encoder: it mean-pools the stored
frame features into exactly K slot vectors. project() is the trainable linear
layer that maps those slots into the decoder's embedding width.
"""

from dataclasses import asdict, dataclass

import numpy as np

from errors import CorruptFeature, DimensionError, PersistenceError, SchemaVersionError
from numerics import Tensor, add, matmul
from persistence import read_features


@dataclass(frozen=True)
class FrontendConfig:
    audio_slot_count: int = 8
    d_audio: int = 16
    d_model: int = 64

    # full-size reference values
    FULL_SCALE_SLOTS = 32
    FULL_SCALE_D_AUDIO = 768
    FULL_SCALE_D_MODEL = 4096

    def validate(self):
        for name in ("audio_slot_count", "d_audio", "d_model"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AudioClipRef:
    id: str
    feature_path: str
    duration_s: float = 10.0

    def to_dict(self):
        return {"id": self.id, "feature_path": self.feature_path, "duration_s": self.duration_s}

    @classmethod
    def from_dict(cls, data):
        duration = float(data.get("duration_s", 10.0))
        if not duration > 0:
            raise ValueError(f"duration_s must be positive, got {duration}")
        return cls(id=str(data["id"]), feature_path=str(data["feature_path"]), duration_s=duration)


@dataclass
class AudioEmbeddingBlock:
    """Projected audio representation, K x d_model"""
    slots: Tensor

    @property
    def slot_count(self):
        return self.slots.shape[0]


def pool_frames(features, slot_count):
    """Mean of K contiguous windows; the last window takes the remainder

    With fewer frames than slots, slot i repeats frame floor(i * frames / K).
    """
    frames = features.shape[0]
    if frames < slot_count:
        picks = [(i * frames) // slot_count for i in range(slot_count)]
        return features[picks].copy()

    width = frames // slot_count
    pooled = np.empty((slot_count, features.shape[1]), dtype=np.float64)
    for i in range(slot_count):
        start = i * width
        stop = frames if i == slot_count - 1 else start + width
        window = features[start:stop]
        pooled[i] = window.sum(axis=0) / len(window)
    return pooled


def encode_audio(clip, cfg):
    """K x d_audio constant tensor for one clip"""
    try:
        features = read_features(clip.feature_path)
    except (PersistenceError, CorruptFeature, SchemaVersionError) as e:
        raise CorruptFeature(f"Cannot load features for clip {clip.id}: {e}") from e

    if not np.all(np.isfinite(features)):
        raise CorruptFeature(f"Clip {clip.id} has non-finite feature values ({clip.feature_path})")
    if features.shape[1] != cfg.d_audio:
        raise DimensionError(
            f"Clip {clip.id} has feature_dim {features.shape[1]}, frontend expects {cfg.d_audio}"
        )
    return Tensor(pool_frames(features, cfg.audio_slot_count))


def project(h, weights, bias):
    """slots = h . weights + bias"""
    if weights.data.ndim != 2 or h.shape[1] != weights.shape[0]:
        raise DimensionError(f"projection expects h[K x {weights.shape[0]}], got {h.shape}")
    if bias.shape != [weights.shape[1]]:
        raise DimensionError(f"projection bias {bias.shape} does not match weights {weights.shape}")
    return AudioEmbeddingBlock(slots=add(matmul(h, weights), bias))
