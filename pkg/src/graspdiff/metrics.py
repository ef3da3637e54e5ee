"""Generation metrics over pluggable embedders: Frechet feature distances,
inception score, joint image-text alignment, keypoint accuracy and a
contact-recall driver.

Feature statistics accumulate in a mergeable (count, mean, co-moment) form so
shards combine associatively.
"""

from __future__ import annotations

import hashlib
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .colors import color_matrix

EIGEN_FLOOR = 1e-10
COV_EPSILON = 1e-6
CLIP_WEIGHT = 2.5


class FeatureEmbedder(Protocol):
    dim: int

    def embed(self, images: np.ndarray) -> np.ndarray: ...


class JointEmbedder(Protocol):
    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


@dataclass
class MetricReport:
    name: str
    value: float
    sample_count: int
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value,
                "sample_count": self.sample_count, "parameters": self.parameters}


class FeatureStats:
    """Streaming mean and co-moment matrix; merge() is associative."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    @classmethod
    def from_features(cls, features: np.ndarray) -> "FeatureStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be (N, D)")
        stats = cls(features.shape[1])
        stats.count = features.shape[0]
        if stats.count:
            stats.mean = features.mean(axis=0)
            centered = features - stats.mean
            stats.m2 = centered.T @ centered
        return stats

    def merge(self, other: "FeatureStats") -> "FeatureStats":
        if other.dim != self.dim:
            raise ValueError("cannot merge stats of different dimensions")
        merged = FeatureStats(self.dim)
        merged.count = self.count + other.count
        if merged.count == 0:
            return merged
        delta = other.mean - self.mean
        merged.mean = self.mean + delta * (other.count / merged.count)
        merged.m2 = (self.m2 + other.m2
                     + np.outer(delta, delta) * self.count * other.count / merged.count)
        return merged

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("need at least two samples for a covariance")
        return self.m2 / (self.count - 1)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(matrix)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def frechet_distance_from_stats(stats_a: FeatureStats, stats_b: FeatureStats,
                                regularize: bool = True) -> float:
    if stats_a.dim != stats_b.dim:
        raise ValueError("feature dimensions differ")
    dim = stats_a.dim
    for stats in (stats_a, stats_b):
        if stats.count < dim + 1 and not regularize:
            raise ValueError(
                f"{stats.count} samples cannot give a full-rank {dim}-D covariance; "
                "enable regularization or add samples")
    cov_a = stats_a.covariance()
    cov_b = stats_b.covariance()
    if regularize:
        smallest = min(np.linalg.eigvalsh(cov_a).min(),
                       np.linalg.eigvalsh(cov_b).min())
        if smallest < EIGEN_FLOOR:
            eye = COV_EPSILON * np.eye(dim)
            cov_a = cov_a + eye
            cov_b = cov_b + eye

    # tr((Sa Sb)^1/2) through the symmetric product Sa^1/2 Sb Sa^1/2
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    tr_sqrt = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)).sum()

    delta = stats_a.mean - stats_b.mean
    value = float(delta @ delta + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    if value < 0.0:
        warnings.warn(f"clamping slightly negative Frechet distance {value:.3e} to 0")
        value = 0.0
    return value


def frechet_distance(features_a: np.ndarray, features_b: np.ndarray,
                     regularize: bool = True) -> float:
    """||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)) between Gaussian fits
    of the two feature sets."""
    return frechet_distance_from_stats(FeatureStats.from_features(features_a),
                                       FeatureStats.from_features(features_b),
                                       regularize)


def inception_score(class_probabilities: np.ndarray) -> float:
    """exp of the mean KL divergence between per-sample class distributions
    and their marginal."""
    probs = np.asarray(class_probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ValueError("class probabilities must be (N, K)")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("rows must be probability distributions")
    marginal = probs.mean(axis=0)
    ratio = np.zeros_like(probs)
    positive = probs > 0
    ratio[positive] = probs[positive] * (np.log(probs[positive])
                                         - np.log(marginal[np.where(positive)[1]]))
    return float(np.exp(ratio.sum(axis=1).mean()))


def cosine_alignment(image_embedding: np.ndarray, text_embedding: np.ndarray) -> float:
    a = np.asarray(image_embedding, dtype=np.float64)
    b = np.asarray(text_embedding, dtype=np.float64)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(a @ b / denom)


def clip_score(image: np.ndarray, text: str, embedder: JointEmbedder,
               weight: float = CLIP_WEIGHT) -> float:
    """weight * max(cosine, 0) between the joint embeddings; the raw cosine is
    available through cosine_alignment."""
    cos = cosine_alignment(embedder.embed_image(image), embedder.embed_text(text))
    return weight * max(cos, 0.0)


def pck(predicted_joints2d: np.ndarray, ground_truth_joints2d: np.ndarray,
        threshold: float) -> float:
    """Fraction of keypoints within a Euclidean threshold, over all samples."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    pred = np.asarray(predicted_joints2d, dtype=np.float64)
    gt = np.asarray(ground_truth_joints2d, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 2:
        raise ValueError("keypoint arrays must share a (..., J, 2) shape")
    dists = np.linalg.norm(pred - gt, axis=-1)
    return float((dists <= threshold).mean())


def contact_recall(items: Sequence, detector: Callable[[object], bool]) -> float:
    """Fraction of items the detector classifies as in-contact."""
    if len(items) == 0:
        raise ValueError("contact recall needs at least one item")
    return float(np.mean([bool(detector(item)) for item in items]))


class SegmentationAdjacencyDetector:
    """Geometric contact stub: hand and object regions of a label map touch
    when any hand pixel is 8-adjacent to an object pixel."""

    def __init__(self, hand_label: int = 1, object_label: int = 2):
        self.hand_label = hand_label
        self.object_label = object_label

    def __call__(self, labels: np.ndarray) -> bool:
        hand = labels == self.hand_label
        if not hand.any():
            return False
        grown = hand.copy()
        grown[1:, :] |= hand[:-1, :]
        grown[:-1, :] |= hand[1:, :]
        grown[:, 1:] |= hand[:, :-1]
        grown[:, :-1] |= hand[:, 1:]
        grown[1:, 1:] |= hand[:-1, :-1]
        grown[1:, :-1] |= hand[:-1, 1:]
        grown[:-1, 1:] |= hand[1:, :-1]
        grown[:-1, :-1] |= hand[1:, 1:]
        return bool((grown & (labels == self.object_label)).any())


# -- deterministic toy embedders ----------------------------------------------

def _pool(images: np.ndarray, grid: int) -> np.ndarray:
    """(N, 3, H, W) -> (N, 3, grid, grid) by average pooling."""
    n, c, h, w = images.shape
    if h % grid or w % grid:
        raise ValueError(f"resolution {h}x{w} not divisible by pool grid {grid}")
    return images.reshape(n, c, grid, h // grid, grid, w // grid).mean(axis=(3, 5))


class ToyFeatureEmbedder:
    """Fixed-seed random linear projection of downsampled pixels."""

    def __init__(self, dim: int = 16, grid: int = 8, seed: int = 0):
        self.dim = dim
        self.grid = grid
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((dim, 3 * grid * grid)) / np.sqrt(3 * grid * grid)

    def embed(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        pooled = _pool(images, self.grid).reshape(images.shape[0], -1)
        return pooled @ self.projection.T


class ToySpatialFeatureEmbedder:
    """Per-cell projections of a coarse spatial grid, flattened; the spatial
    variant used for the second Frechet metric."""

    def __init__(self, grid: int = 4, channels: int = 4, seed: int = 1):
        self.grid = grid
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((channels, 3)) / np.sqrt(3.0)
        self.dim = grid * grid * channels

    def embed(self, images: np.ndarray) -> np.ndarray:
        pooled = _pool(np.asarray(images, dtype=np.float64), self.grid)
        feats = np.einsum("kc,nchw->nkhw", self.projection, pooled)
        return feats.reshape(images.shape[0], -1)


class ToyClassifier:
    """Fixed random linear head over pooled pixels with a softmax; provides
    class probabilities for the inception score."""

    def __init__(self, classes: int = 10, grid: int = 4, seed: int = 2,
                 temperature: float = 0.5):
        self.classes = classes
        self.grid = grid
        self.temperature = temperature
        rng = np.random.default_rng(seed)
        self.weights = rng.standard_normal((classes, 3 * grid * grid))

    def probabilities(self, images: np.ndarray) -> np.ndarray:
        pooled = _pool(np.asarray(images, dtype=np.float64), self.grid)
        logits = pooled.reshape(images.shape[0], -1) @ self.weights.T / self.temperature
        logits -= logits.max(axis=1, keepdims=True)
        expd = np.exp(logits)
        return expd / expd.sum(axis=1, keepdims=True)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class ToyJointEmbedder:
    """Joint space built from hashed token vectors: text is a bag of token
    hashes; an image maps through its color histogram onto the token vectors
    of the matching color names.  Outputs are unit vectors."""

    def __init__(self, dim: int = 64, seed: int = 3, bandwidth: float = 0.18):
        self.dim = dim
        self.seed = seed
        self.bandwidth = bandwidth
        self._names, self._protos = color_matrix()
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower()) or ["<empty>"]
        vec = np.sum([self._token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            return self._token_vector("<empty>")
        return vec / norm

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        rgb = (np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0) + 1.0) / 2.0
        pixels = rgb.reshape(3, -1).T
        d2 = ((pixels[:, None, :] - self._protos[None, :, :]) ** 2).sum(axis=2)
        weights = np.exp(-d2 / (2.0 * self.bandwidth ** 2))
        weights /= weights.sum(axis=1, keepdims=True)
        histogram = weights.mean(axis=0)
        vec = np.zeros(self.dim)
        for name, mass in zip(self._names, histogram):
            vec += mass * self._token_vector(name)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            return self._token_vector("<empty>")
        return vec / norm
