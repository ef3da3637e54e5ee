"""Synthetic 32x32 benchmark scenes: a colored object blob approached by a
five-segment hand polyline, drawn from randomly generated conditions.

The image is rendered deterministically from the same geometry that produces
the condition maps, so structure adherence of a trained model is measurable
as IoU between a color-thresholded generated object region and the
conditioning segmentation.  Backgrounds are solid named colors carried by the
caption, which makes text-to-appearance alignment measurable with the toy
joint embedder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio
from .colors import COLOR_PROTOTYPES, color_array, color_matrix
from .conditions import (ConditionSet, LABEL_HAND, LABEL_OBJECT, pack_labels)
from .data import write_captions

OBJECT_COLORS = ("red", "green", "blue", "yellow", "magenta", "cyan")
TRAIN_BACKGROUNDS = ("gray", "white")
BUFFER_BACKGROUNDS = ("lavender", "crimson", "teal", "gold",
                      "salmon", "orchid", "navy", "olive")
HAND_COLOR = "tan"
HAND_SEGMENTS = 5
SEGMENT_COLORS = ("orange", "purple", "teal", "crimson", "gold")

CAPTION_TEMPLATE = "a tan hand grasping a {obj} object on a {bg} background"
BUFFER_CAPTION_TEMPLATE = "a plain {bg} background scene"


def _grid(resolution: int):
    ys, xs = np.mgrid[0:resolution, 0:resolution]
    return xs.astype(np.float64), ys.astype(np.float64)


def _segment_distance(xs, ys, p0, p1):
    d = np.array(p1, dtype=np.float64) - np.array(p0, dtype=np.float64)
    len2 = float(d @ d)
    px, py = xs - p0[0], ys - p0[1]
    if len2 < 1e-12:
        return np.hypot(px, py)
    u = np.clip((px * d[0] + py * d[1]) / len2, 0.0, 1.0)
    return np.hypot(px - u * d[0], py - u * d[1])


@dataclass
class ToyScene:
    """Geometry of one synthetic sample."""

    object_center: tuple[float, float]
    object_radii: tuple[float, float]
    object_color: str
    background_color: str
    hand_points: np.ndarray  # (HAND_SEGMENTS + 1, 2) pixel coordinates
    normal_dir: np.ndarray   # unit vector, camera-facing

    def caption(self) -> str:
        return CAPTION_TEMPLATE.format(obj=self.object_color, bg=self.background_color)


def random_scene(rng: np.random.Generator, resolution: int = 32,
                 backgrounds=TRAIN_BACKGROUNDS, objects=OBJECT_COLORS) -> ToyScene:
    margin = resolution * 0.25
    center = rng.uniform(margin, resolution - margin, size=2)
    radii = rng.uniform(resolution * 0.12, resolution * 0.24, size=2)

    # hand walks in from a random border point toward the object
    side = rng.integers(0, 4)
    t = rng.uniform(0.15, 0.85) * resolution
    start = [(t, 1.0), (t, resolution - 2.0), (1.0, t), (resolution - 2.0, t)][side]
    start = np.array(start, dtype=np.float64)
    target = center + rng.uniform(-2.0, 2.0, size=2)
    points = [start]
    for k in range(1, HAND_SEGMENTS + 1):
        frac = k / HAND_SEGMENTS
        along = start + (target - start) * frac
        wobble = rng.uniform(-2.5, 2.5, size=2) * (1.0 - frac)
        points.append(along + wobble)
    points = np.clip(np.stack(points), 0.5, resolution - 1.5)

    direction = rng.normal(size=3)
    direction[2] = -abs(direction[2]) - 0.5
    direction /= np.linalg.norm(direction)

    return ToyScene(tuple(center), tuple(radii),
                    str(rng.choice(objects)), str(rng.choice(backgrounds)),
                    points, direction)


def _object_mask(scene: ToyScene, resolution: int) -> np.ndarray:
    xs, ys = _grid(resolution)
    cx, cy = scene.object_center
    rx, ry = scene.object_radii
    return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0


def _hand_distance(scene: ToyScene, resolution: int) -> np.ndarray:
    xs, ys = _grid(resolution)
    dist = np.full((resolution, resolution), np.inf)
    for a, b in zip(scene.hand_points[:-1], scene.hand_points[1:]):
        dist = np.minimum(dist, _segment_distance(xs, ys, a, b))
    return dist


def render_scene(scene: ToyScene, resolution: int = 32):
    """Returns (image in [-1, 1], ConditionSet, object mask)."""
    obj_mask = _object_mask(scene, resolution)
    hand_dist = _hand_distance(scene, resolution)
    hand_mask = hand_dist <= 1.2

    labels = np.zeros((resolution, resolution), dtype=np.int64)
    labels[obj_mask] = LABEL_OBJECT
    labels[hand_mask] = LABEL_HAND  # hand occludes the object
    segmentation = pack_labels(labels)

    skeleton = np.zeros((3, resolution, resolution), dtype=np.float32)
    xs, ys = _grid(resolution)
    for i, (a, b) in enumerate(zip(scene.hand_points[:-1], scene.hand_points[1:])):
        d = _segment_distance(xs, ys, a, b)
        alpha = np.clip(1.6 - d, 0.0, 1.0).astype(np.float32)
        color = color_array(SEGMENT_COLORS[i])
        over = alpha > skeleton.max(axis=0)
        skeleton[:, over] = color[:, None] * alpha[None, over]

    normal = np.zeros((3, resolution, resolution), dtype=np.float32)
    normal[:, hand_mask] = scene.normal_dir.astype(np.float32)[:, None]

    rgb = np.empty((3, resolution, resolution), dtype=np.float32)
    rgb[:] = color_array(scene.background_color)[:, None, None]
    # sub-pixel edge feather so color-thresholded extraction stays tight
    q = np.sqrt(((xs - scene.object_center[0]) / scene.object_radii[0]) ** 2
                + ((ys - scene.object_center[1]) / scene.object_radii[1]) ** 2)
    edge_px = (q - 1.0) * np.sqrt(scene.object_radii[0] * scene.object_radii[1])
    obj_alpha = np.clip(1.0 - edge_px / 0.7, 0.0, 1.0).astype(np.float32)
    oc = color_array(scene.object_color)
    rgb = rgb * (1 - obj_alpha) + oc[:, None, None] * obj_alpha
    hand_alpha = np.clip(1.2 - hand_dist, 0.0, 1.0).astype(np.float32)
    hc = color_array(HAND_COLOR)
    rgb = rgb * (1 - hand_alpha) + hc[:, None, None] * hand_alpha

    image = (rgb * 2.0 - 1.0).astype(np.float32)
    return image, ConditionSet(skeleton, segmentation.astype(np.float32),
                               normal), obj_mask


def write_toy_dataset(root: Path, count: int, seed: int = 0, resolution: int = 32,
                      backgrounds=TRAIN_BACKGROUNDS, objects=OBJECT_COLORS) -> list[ToyScene]:
    """Materialize a dataset in the training directory layout."""
    root = Path(root)
    for sub in ("images", "skeleton", "segmentation", "normal"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    captions = {}
    scenes = []
    for i in range(count):
        scene = random_scene(rng, resolution, backgrounds, objects)
        image, conds, _ = render_scene(scene, resolution)
        stem = f"{i:06d}"
        imageio.write_image(root / "images" / f"{stem}.png", image)
        imageio.write_skeleton(root / "skeleton" / f"{stem}.png", conds.skeleton)
        imageio.write_segmentation(root / "segmentation" / f"{stem}.png",
                                   conds.segmentation)
        imageio.write_normal(root / "normal" / f"{stem}.png", conds.normal)
        captions[i] = scene.caption()
        scenes.append(scene)
    write_captions(root / "captions.jsonl", captions)
    return scenes


def write_toy_buffer(root: Path, count: int, seed: int = 0, resolution: int = 32,
                     backgrounds=BUFFER_BACKGROUNDS) -> None:
    """Background-only images with captions naming their color."""
    root = Path(root) / "background"
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    captions = {}
    for i in range(count):
        bg = str(rng.choice(backgrounds))
        rgb = np.empty((3, resolution, resolution), dtype=np.float32)
        rgb[:] = color_array(bg)[:, None, None]
        imageio.write_image(root / "images" / f"{i:06d}.png", rgb * 2.0 - 1.0)
        captions[i] = BUFFER_CAPTION_TEMPLATE.format(bg=bg)
    write_captions(root / "captions.jsonl", captions)


def object_region_from_image(image: np.ndarray, object_color: str) -> np.ndarray:
    """Color-thresholded object extraction: pixels whose RGB sits nearest to
    the stated object prototype among all known prototypes."""
    rgb = imageio.image_to_unit(image).reshape(3, -1).T
    names, protos = color_matrix()
    dists = np.linalg.norm(rgb[:, None, :] - protos[None, :, :], axis=2)
    nearest = np.argmin(dists, axis=1)
    mask = nearest == names.index(object_color)
    side = int(np.sqrt(mask.size))
    return mask.reshape(side, side)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def grasp_approach_conditions(seed: int, frames: int, resolution: int = 32):
    """Per-frame condition sets of one smooth approach: the object stays
    fixed while the hand polyline advances toward it frame by frame."""
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, resolution)
    start_points = scene.hand_points.copy()
    # frame 0 holds the polyline well away from the object; the last frame
    # reaches the sampled grasp configuration
    away = start_points[0] - (start_points[-1] - start_points[0]) * 0.6
    conds = []
    scenes = []
    for f in range(frames):
        u = f / max(frames - 1, 1)
        pts = (1 - u) * (start_points - start_points[0] + away) + u * start_points
        frame_scene = ToyScene(scene.object_center, scene.object_radii,
                               scene.object_color, scene.background_color,
                               np.clip(pts, 0.5, resolution - 1.5), scene.normal_dir)
        _, cset, _ = render_scene(frame_scene, resolution)
        conds.append(cset)
        scenes.append(frame_scene)
    return conds, scenes
