"""Alignment-loss evaluation and open-vocabulary classification on
precomputed feature vectors (no learned volume exists here; the training
loop is realized as loss evaluation only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.isfinite(v).all():
        raise DomainError(f"{what} has non-finite entries")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DomainError(f"{what} has zero norm")
    return v / norm


@dataclass(frozen=True)
class TextPromptBank:
    class_names: tuple[str, ...]
    vectors: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.class_names):
            raise ConfigError(
                f"need one embedding per class: {v.shape} vs {len(self.class_names)} names"
            )
        if not np.isfinite(v).all():
            raise ConfigError("prompt bank has non-finite entries")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    ua = _unit(a, "vector")
    ub = _unit(b, "vector")
    if ua.shape != ub.shape:
        raise DomainError(f"dimension mismatch: {ua.shape} vs {ub.shape}")
    return float(ua @ ub)


def alignment_loss(f2d: np.ndarray, voxel_features: list[np.ndarray]) -> float:
    """Sum of cosine distances (1 - cos) between f2d and each voxel feature."""
    u = _unit(f2d, "segment feature")
    total = 0.0
    for i, f in enumerate(voxel_features):
        v = _unit(f, f"voxel feature {i}")
        if v.shape != u.shape:
            raise DomainError(f"voxel feature {i} dimension mismatch")
        total += 1.0 - float(u @ v)
    return total


def average_box_feature(voxel_features: list[np.ndarray]) -> np.ndarray:
    """Componentwise mean of the voxel features inside a box."""
    if len(voxel_features) == 0:
        raise DomainError("no voxel features to average")
    mat = np.stack([np.asarray(v, dtype=np.float64).reshape(-1) for v in voxel_features])
    if not np.isfinite(mat).all():
        raise DomainError("voxel feature has non-finite entries")
    return mat.mean(axis=0)


def ov_classify(box_feature: np.ndarray, bank: TextPromptBank) -> np.ndarray:
    """Per-class probabilities: softmax over cosine similarity / temperature."""
    u = _unit(box_feature, "box feature")
    if u.size != bank.dim:
        raise DomainError(f"box feature dim {u.size} does not match bank dim {bank.dim}")
    prompts = bank.vectors
    norms = np.linalg.norm(prompts, axis=1)
    if (norms == 0).any():
        raise DomainError("prompt bank contains a zero vector")
    sims = (prompts @ u) / norms
    logits = sims / bank.temperature
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return p
