"""Appearance embeddings and cosine distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DIM = 128


class EmbeddingError(ValueError):
    """Corrupt or incompatible embedding input."""


class Embedding:
    """An L2-normalized appearance vector.

    The input is normalized on construction; zero or non-finite vectors are
    rejected.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64).ravel()
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise EmbeddingError("embedding must be a non-empty finite vector")
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise EmbeddingError("zero vector cannot be normalized")
        arr /= norm
        arr.setflags(write=False)
        self.values = arr

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Embedding(dim={self.dim})"


@dataclass(frozen=True)
class TrackAppearance:
    """Per-track feature memory; ``ema_alpha`` is the weight on the old feature."""

    current: Embedding
    ema_alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in [0, 1]")


def cosine_distance(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise EmbeddingError(f"embedding dimension mismatch: {a.dim} vs {b.dim}")
    d = 1.0 - float(np.dot(a.values, b.values))
    return min(max(d, 0.0), 2.0)


def update_track_appearance(mem: TrackAppearance, obs: Embedding) -> TrackAppearance:
    if mem.ema_alpha == 0.0:
        return TrackAppearance(obs, 0.0)
    if mem.ema_alpha == 1.0:
        return mem
    if obs.dim != mem.current.dim:
        raise EmbeddingError(f"embedding dimension mismatch: {mem.current.dim} vs {obs.dim}")
    blend = mem.ema_alpha * mem.current.values + (1.0 - mem.ema_alpha) * obs.values
    try:
        return TrackAppearance(Embedding(blend), mem.ema_alpha)
    except EmbeddingError:
        # exact cancellation of opposite vectors: fall back to the observation
        return TrackAppearance(obs, mem.ema_alpha)
