"""Command bodies shared by the CLI and the test harness.

Each function validates its inputs before writing anything, works purely from
the PipelineConfig plus explicit arguments, and is idempotent given identical
config and seed.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np
import torch

from . import report
from .checkpoint import load_checkpoint
from .config import PipelineConfig
from .data import ArrayDataset, BackgroundBuffer, ValidationError, scan_dataset
from .denoiser import build_model
from .seeding import derive_seed
from .text import HashTextEmbedder
from .trainer import Trainer

LOSS_LOG_FIELDS = ("step", "loss", "main_loss", "reg_loss")


def cmd_train(config: PipelineConfig, out_dir: Path, resume: Path | None = None,
              quiet: bool = False) -> Path:
    """Run training to total_steps; writes periodic checkpoints, a CSV loss
    log and a loss-curve figure.  Returns the final checkpoint path."""
    out_dir = Path(out_dir)
    dataset = ArrayDataset.load(scan_dataset(config.path("dataset")))
    train_cfg = config.train_config()
    buffer = None
    if train_cfg.w_r > 0 and train_cfg.reg_mix_probability > 0:
        buffer = BackgroundBuffer.load(config.path("buffer"))

    denoiser_cfg = config.denoiser_config()
    if dataset.resolution != (denoiser_cfg.image_size, denoiser_cfg.image_size):
        raise ValidationError(
            f"dataset resolution {dataset.resolution} does not match "
            f"model.image_size {denoiser_cfg.image_size}")

    out_dir.mkdir(parents=True, exist_ok=True)
    embedder = HashTextEmbedder(denoiser_cfg.context_dim, denoiser_cfg.context_tokens)
    if resume is not None:
        trainer = Trainer.resume(resume, dataset, buffer, embedder)
    else:
        model = build_model(denoiser_cfg, derive_seed(config.seed, "init"))
        trainer = Trainer(model, config.schedule(), dataset, buffer, train_cfg,
                          embedder, seed=config.seed)

    loss_csv = out_dir / "loss.csv"
    mode = "a" if (resume is not None and loss_csv.exists()) else "w"
    latest = out_dir / "latest.ckpt"
    started = time.time()
    with open(loss_csv, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_LOG_FIELDS, extrasaction="ignore")
        if mode == "w":
            writer.writeheader()
        trainer.save(latest)  # step-0 state; total_steps == 0 stops here
        while trainer.step < trainer.config.total_steps:
            record = trainer.training_step()
            writer.writerow(record)
            if trainer.step % trainer.config.checkpoint_every == 0:
                trainer.save(out_dir / f"step-{trainer.step:06d}.ckpt")
                trainer.save(latest)
                fh.flush()
                if not quiet:
                    rate = trainer.step / max(time.time() - started, 1e-9)
                    print(f"step {trainer.step}/{trainer.config.total_steps} "
                          f"loss {record['loss']:.4f} ({rate:.1f} steps/s)", flush=True)
        trainer.save(latest)
    report.render_loss_curve(loss_csv, out_dir / "loss.png")
    return latest


def cmd_validate(config: PipelineConfig) -> dict:
    """Check dataset (and buffer, when configured) against their contracts."""
    manifest = scan_dataset(config.path("dataset"))
    dataset = ArrayDataset.load(manifest)
    problems = []
    for i in range(len(dataset)):
        try:
            dataset.condition_set(i).validate()
        except ValueError as exc:
            problems.append(f"sample {manifest.records[i].index}: {exc}")
    if problems:
        raise ValidationError("condition validation failed:\n  "
                              + "\n  ".join(problems))
    summary = {"samples": manifest.count, "resolution": list(dataset.resolution)}
    if str(config["paths.buffer"]):
        buffer = BackgroundBuffer.load(config.path("buffer"))
        summary["buffer_samples"] = len(buffer)
    return summary
