"""Fixed profile of the synthetic end-to-end benchmark.

Three training variants over one shared dataset:
  full   all three condition encoders active, background regularization on
  noseg  segmentation weight zeroed (structure ablation)
  noreg  regularization weight zero (appearance ablation)

Scale notes, measured on the 1-core build machine: 20k steps at batch 4 run
around 75-90 minutes per variant; the short schedule (250 steps, beta_end
0.08) keeps the terminal signal-to-noise near zero while making full
ancestral sampling affordable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .conditions import LABEL_OBJECT
from .config import PipelineConfig
from .toydata import (BUFFER_BACKGROUNDS, CAPTION_TEMPLATE, OBJECT_COLORS,
                      random_scene, render_scene, write_toy_buffer,
                      write_toy_dataset)

DATASET_SEED = 101
BUFFER_SEED = 202
HOLDOUT_SEED = 303
PROMPT_SEED = 404
TRAIN_COUNT = 2000
BUFFER_COUNT = 256
RESOLUTION = 32
TRAIN_STEPS = 20000
LEARNING_RATE = 2e-4
SAMPLING_GUIDANCE = 3.0
VARIANTS = ("full", "noseg", "noreg")


def ensure_benchmark_data(root: Path) -> tuple[Path, Path]:
    """Deterministically materialize dataset and buffer under root."""
    root = Path(root)
    train_dir = root / "train"
    buffer_dir = root / "buffer"
    if not (train_dir / "captions.jsonl").exists():
        write_toy_dataset(train_dir, TRAIN_COUNT, seed=DATASET_SEED,
                          resolution=RESOLUTION)
    if not (buffer_dir / "background" / "captions.jsonl").exists():
        write_toy_buffer(buffer_dir, BUFFER_COUNT, seed=BUFFER_SEED,
                         resolution=RESOLUTION)
    return train_dir, buffer_dir


def benchmark_config(variant: str, train_dir: Path, buffer_dir: Path,
                     total_steps: int = TRAIN_STEPS) -> PipelineConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown benchmark variant {variant!r}")
    values = {
        "seed": 1000 + VARIANTS.index(variant),
        "schedule.steps": 250,
        "schedule.beta_end": 0.08,
        "model.image_size": RESOLUTION,
        "train.learning_rate": LEARNING_RATE,
        "train.batch_size": 4,
        "train.total_steps": total_steps,
        "train.checkpoint_every": 2500,
        "paths.dataset": str(train_dir),
        "paths.buffer": str(buffer_dir),
    }
    if variant == "noseg":
        values["model.condition_weights"] = (1.0, 1.0, 0.0)
    if variant == "noreg":
        values["train.w_r"] = 0.0
        values["train.reg_mix_probability"] = 0.0
    return PipelineConfig(values)


def holdout_scenes(count: int, seed: int = HOLDOUT_SEED):
    """Unseen scenes: (scene, conditions, object-region mask) triples.  The
    mask is the object channel of the conditioning segmentation, the target
    the sampler is asked to respect."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        scene = random_scene(rng, RESOLUTION)
        _, conds, _ = render_scene(scene, RESOLUTION)
        target = conds.segmentation[LABEL_OBJECT] > 0.5
        out.append((scene, conds, target))
    return out


def novel_background_prompts(count: int = 64, seed: int = PROMPT_SEED):
    """Captions naming buffer-only backgrounds, with matching fresh scenes.

    Returns (caption, background, scene, conditions) tuples; the structure
    conditions come from unseen scenes so the prompt is the only source of
    the background appearance.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        scene = random_scene(rng, RESOLUTION)
        bg = str(rng.choice(BUFFER_BACKGROUNDS))
        obj = str(rng.choice(OBJECT_COLORS))
        caption = CAPTION_TEMPLATE.format(obj=obj, bg=bg)
        _, conds, _ = render_scene(scene, RESOLUTION)
        out.append((caption, bg, scene, conds))
    return out
