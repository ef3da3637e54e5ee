"""Structure-condition triple fed to the denoiser: skeleton, segmentation, normals.

Encoding conventions, shared by the renderer, the dataset loader and the
sampler:

* skeleton: (3, H, W) float, colored bone rendering in [0, 1] on black.
* segmentation: (3, H, W) float, channels ordered (background, hand, object).
  Hand pixels are (0, 1, 0), object pixels (0, 0, 1).  The background channel
  is reserved but never set, so an all-background map equals the zero map and
  the vacant map used for guidance matches background regions of real data.
* normal: (3, H, W) float, camera-frame unit vectors in [-1, 1]; zero vector
  where no surface was observed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LABEL_BACKGROUND = 0
LABEL_HAND = 1
LABEL_OBJECT = 2
NUM_LABELS = 3


@dataclass
class ConditionSet:
    skeleton: np.ndarray
    segmentation: np.ndarray
    normal: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        return self.skeleton.shape[-2], self.skeleton.shape[-1]

    def validate(self, resolution: tuple[int, int] | None = None) -> None:
        for name, arr in (("skeleton", self.skeleton),
                          ("segmentation", self.segmentation),
                          ("normal", self.normal)):
            if arr.ndim != 3 or arr.shape[0] != 3:
                raise ValueError(f"{name} must be shaped (3, H, W), got {arr.shape}")
            if arr.shape[1:] != self.skeleton.shape[1:]:
                raise ValueError(f"{name} resolution differs from skeleton")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if resolution is not None and self.resolution != tuple(resolution):
            raise ValueError(
                f"condition resolution {self.resolution} != expected {tuple(resolution)}")
        norms = np.linalg.norm(self.normal, axis=0)
        observed = norms > 1e-8
        if observed.any() and np.max(np.abs(norms[observed] - 1.0)) > 1e-4:
            raise ValueError("observed normals must have unit length")


def blank_conditions(resolution: tuple[int, int]) -> ConditionSet:
    """The vacant condition set: zero maps, i.e. an all-background scene."""
    h, w = int(resolution[0]), int(resolution[1])
    if h < 1 or w < 1:
        raise ValueError("resolution must be positive")
    zeros = lambda: np.zeros((3, h, w), dtype=np.float32)
    return ConditionSet(zeros(), zeros(), zeros())


def pack_labels(labels: np.ndarray) -> np.ndarray:
    """(H, W) label map -> (3, H, W) channel encoding (background stays zero)."""
    if labels.ndim != 2:
        raise ValueError("label map must be 2-D")
    if labels.min() < 0 or labels.max() >= NUM_LABELS:
        raise ValueError("labels must be in {background, hand, object}")
    packed = np.zeros((3,) + labels.shape, dtype=np.float32)
    packed[LABEL_HAND] = labels == LABEL_HAND
    packed[LABEL_OBJECT] = labels == LABEL_OBJECT
    return packed


def unpack_labels(packed: np.ndarray) -> np.ndarray:
    """Inverse of pack_labels; the all-zero pixel decodes to background."""
    if packed.ndim != 3 or packed.shape[0] != 3:
        raise ValueError("packed segmentation must be shaped (3, H, W)")
    labels = np.argmax(packed, axis=0)
    labels[packed.max(axis=0) < 0.5] = LABEL_BACKGROUND
    return labels.astype(np.int64)
