"""Named color prototypes shared by the synthetic benchmark data and the toy
joint embedder.  RGB in [0, 1]."""

from __future__ import annotations

import numpy as np

COLOR_PROTOTYPES: dict[str, tuple[float, float, float]] = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.92, 0.88, 0.10),
    "magenta": (0.88, 0.12, 0.85),
    "cyan": (0.10, 0.85, 0.88),
    "orange": (0.95, 0.55, 0.08),
    "purple": (0.55, 0.15, 0.75),
    "gray": (0.55, 0.55, 0.55),
    "white": (0.95, 0.95, 0.95),
    "black": (0.06, 0.06, 0.06),
    "tan": (0.82, 0.71, 0.55),
    "lavender": (0.75, 0.70, 0.93),
    "crimson": (0.78, 0.09, 0.25),
    "teal": (0.05, 0.52, 0.53),
    "gold": (0.85, 0.68, 0.10),
    "salmon": (0.96, 0.55, 0.48),
    "orchid": (0.84, 0.44, 0.83),
    "olive": (0.50, 0.52, 0.12),
    "navy": (0.08, 0.10, 0.45),
}


def color_array(name: str) -> np.ndarray:
    return np.array(COLOR_PROTOTYPES[name], dtype=np.float32)


def color_matrix() -> tuple[list[str], np.ndarray]:
    """All prototype names plus the (L, 3) matrix of their RGB values."""
    names = list(COLOR_PROTOTYPES)
    return names, np.array([COLOR_PROTOTYPES[n] for n in names], dtype=np.float32)
