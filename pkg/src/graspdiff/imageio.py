"""PNG codecs for images, condition maps and depth.

Value conventions on disk:
  images      8-bit RGB, [-1, 1] <-> [0, 255]
  skeleton    8-bit RGB, [0, 1] <-> [0, 255]
  segmentation 8-bit RGB, channel encoding {0, 1} <-> {0, 255}
  normals     8-bit RGB, [-1, 1] <-> [0, 255] (camera frame)
  depth       16-bit grayscale, millimeters, 0 = no surface
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def _to_u8(chw: np.ndarray, lo: float, hi: float) -> np.ndarray:
    arr = (np.clip(chw, lo, hi) - lo) / (hi - lo)
    return np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)


def _from_u8(img: Image.Image, lo: float, hi: float) -> np.ndarray:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return (arr * (hi - lo) + lo).transpose(2, 0, 1)


def write_image(path, chw: np.ndarray) -> None:
    Image.fromarray(_to_u8(chw, -1.0, 1.0)).save(path)


def read_image(path) -> np.ndarray:
    return _from_u8(Image.open(path), -1.0, 1.0)


def write_skeleton(path, chw: np.ndarray) -> None:
    Image.fromarray(_to_u8(chw, 0.0, 1.0)).save(path)


def read_skeleton(path) -> np.ndarray:
    return _from_u8(Image.open(path), 0.0, 1.0)


def write_segmentation(path, packed: np.ndarray) -> None:
    Image.fromarray(_to_u8(packed, 0.0, 1.0)).save(path)


def read_segmentation(path) -> np.ndarray:
    packed = _from_u8(Image.open(path), 0.0, 1.0)
    return np.round(packed).astype(np.float32)


def write_normal(path, chw: np.ndarray) -> None:
    Image.fromarray(_to_u8(chw, -1.0, 1.0)).save(path)


def read_normal(path) -> np.ndarray:
    normal = _from_u8(Image.open(path), -1.0, 1.0)
    # renormalize quantized vectors; zero stays zero (no surface)
    norms = np.linalg.norm(normal, axis=0)
    observed = norms > 0.5
    normal[:, observed] /= norms[observed]
    normal[:, ~observed] = 0.0
    return normal


def write_depth(path, depth_m: np.ndarray) -> None:
    """Depth in meters to 16-bit millimeter PNG; invalid (0) stays 0."""
    mm = np.round(np.clip(depth_m, 0.0, 65.535) * 1000.0).astype(np.uint16)
    Image.fromarray(mm, mode="I;16").save(path)


def read_depth(path) -> np.ndarray:
    mm = np.asarray(Image.open(path), dtype=np.uint16)
    return mm.astype(np.float32) / 1000.0


def image_to_unit(chw: np.ndarray) -> np.ndarray:
    """[-1, 1] image to [0, 1] for plotting and color statistics."""
    return np.clip((chw + 1.0) / 2.0, 0.0, 1.0)
