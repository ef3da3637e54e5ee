"""Single-file checkpoint container with integrity checking.

Layout: 8-byte magic, 32-byte sha256 of the payload, then a torch-serialized
dict holding a format version, the denoiser config, named parameter arrays
and (for training checkpoints) optimizer moments, step counter and RNG
stream states.
"""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import torch

from .denoiser import ConditionalDenoiser, DenoiserConfig

MAGIC = b"GRASPDF1"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, model: ConditionalDenoiser, trainer_state: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "denoiser_config": model.cfg.to_dict(),
        "model_state": model.state_dict(),
        "trainer_state": trainer_state,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    raw = buf.getvalue()
    Path(path).write_bytes(MAGIC + hashlib.sha256(raw).digest() + raw)


def load_checkpoint(path, expect_config: DenoiserConfig | None = None):
    """Returns (model, trainer_state).  Rejects corrupted files and, when an
    expected config is given, any config mismatch."""
    blob = Path(path).read_bytes()
    if len(blob) < 40 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    digest, raw = blob[8:40], blob[40:]
    if hashlib.sha256(raw).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    payload = torch.load(io.BytesIO(raw), weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {payload.get('format_version')}")
    cfg = DenoiserConfig.from_dict(payload["denoiser_config"])
    if expect_config is not None and cfg != expect_config:
        raise CheckpointError(
            f"{path}: checkpoint config {cfg} does not match expected {expect_config}")
    model = ConditionalDenoiser(cfg)
    model.load_state_dict(payload["model_state"])
    return model, payload["trainer_state"]
