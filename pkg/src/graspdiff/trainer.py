"""Optimization loop: regularized objective, background-buffer mixing,
freeze policies and resumable checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .data import ArrayDataset, BackgroundBuffer, ValidationError
from .denoiser import ConditionalDenoiser
from .schedule import NoiseSchedule, forward_diffuse_batch, noise_prediction_loss
from .seeding import derive_rng, derive_torch_generator
from .text import HashTextEmbedder

FREEZE_ALL_TRAINABLE = "all_trainable"
FREEZE_DECODER_ONLY = "decoder_only"


class NumericalAbort(RuntimeError):
    """Non-finite numbers encountered mid-run; maps to exit code 3."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 8
    w_r: float = 1.0
    reg_mix_probability: float = 0.5
    freeze_policy: str = FREEZE_ALL_TRAINABLE
    total_steps: int = 20000
    shared_reg_draws: bool = True
    checkpoint_every: int = 2000

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 <= self.reg_mix_probability <= 1.0:
            raise ValueError("reg_mix_probability must lie in [0, 1]")
        if self.w_r < 0:
            raise ValueError("w_r must be non-negative")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("batch_size must be >= 1 and total_steps >= 0")
        if self.freeze_policy not in (FREEZE_ALL_TRAINABLE, FREEZE_DECODER_ONLY):
            raise ValueError(f"unknown freeze_policy {self.freeze_policy!r}")
        if self.w_r > 0 and self.reg_mix_probability > 0 and self.batch_size % 2:
            raise ValueError("batch_size must be even when background mixing is active")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBatch:
    """One term of the objective: images with their conditions and contexts.

    ``conditions`` is the (skeleton, normal, segmentation) tensor triple; the
    background term passes all-zero maps (the vacant conditions).
    """

    images: torch.Tensor
    conditions: tuple[torch.Tensor, torch.Tensor, torch.Tensor]
    contexts: torch.Tensor
    t: torch.Tensor
    eps: torch.Tensor


def _term(model: ConditionalDenoiser, schedule: NoiseSchedule, batch: LossBatch):
    x_t = forward_diffuse_batch(batch.images, batch.t, batch.eps, schedule)
    cond_emb = model.encode_condition_tensors(*batch.conditions)
    eps_hat = model.denoise(x_t, batch.t, batch.contexts, cond_emb)
    return noise_prediction_loss(batch.eps, eps_hat)


def regularized_loss(model: ConditionalDenoiser, schedule: NoiseSchedule,
                     batch: LossBatch, reg_batch: LossBatch | None, w_r: float):
    """Noise-prediction MSE on the main batch plus w_r times the same MSE on
    the background batch.  Returns (total, main, reg); reg is None when the
    background term is inactive, in which case total is bitwise the main loss.
    """
    main = _term(model, schedule, batch)
    if w_r == 0.0 or reg_batch is None:
        if w_r > 0.0:
            raise ValueError("background batch required when w_r > 0")
        return main, main, None
    reg = _term(model, schedule, reg_batch)
    return main + w_r * reg, main, reg


def blank_condition_tensors(n: int, resolution, dtype=torch.float32):
    h, w = resolution
    zeros = lambda: torch.zeros(n, 3, h, w, dtype=dtype)
    return zeros(), zeros(), zeros()


class Trainer:
    """Owns the parameter state; one logical writer, reproducible streams.

    Randomness: "data" orders HOI samples, "mix" decides background mixing
    and buffer indices, "timesteps" and "noise" drive the diffusion draws.
    """

    def __init__(self, model: ConditionalDenoiser, schedule: NoiseSchedule,
                 dataset: ArrayDataset, buffer: BackgroundBuffer | None,
                 config: TrainConfig, embedder: HashTextEmbedder | None = None,
                 seed: int = 0):
        config.validate()
        if config.w_r > 0 and config.reg_mix_probability > 0 and buffer is None:
            raise ValidationError("background buffer required when w_r > 0")
        self.model = model
        self.schedule = schedule
        self.config = config
        self.seed = seed
        self.step = 0
        self.embedder = embedder or HashTextEmbedder(model.cfg.context_dim,
                                                     model.cfg.context_tokens)

        self.images = torch.from_numpy(dataset.images)
        self.conditions = (torch.from_numpy(dataset.skeletons),
                           torch.from_numpy(dataset.normals),
                           torch.from_numpy(dataset.segmentations))
        self.contexts = torch.from_numpy(self.embedder.embed_batch(dataset.captions))
        if buffer is not None:
            self.buffer_images = torch.from_numpy(buffer.images)
            self.buffer_contexts = torch.from_numpy(
                self.embedder.embed_batch(buffer.captions))
        else:
            self.buffer_images = None
            self.buffer_contexts = None

        self._apply_freeze_policy()
        trainable = [p for p in model.parameters() if p.requires_grad]
        self.optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

        self.data_rng = derive_rng(seed, "data")
        self.mix_rng = derive_rng(seed, "mix")
        self.t_gen = derive_torch_generator(seed, "timesteps")
        self.eps_gen = derive_torch_generator(seed, "noise")

    def _apply_freeze_policy(self) -> None:
        if self.config.freeze_policy == FREEZE_ALL_TRAINABLE:
            for p in self.model.parameters():
                p.requires_grad_(True)
            return
        trainable = self.model.decoder_parameter_names()
        for name, p in self.model.named_parameters():
            p.requires_grad_(name in trainable)

    def _draws(self, n: int):
        t = torch.randint(0, self.schedule.steps, (n,), generator=self.t_gen)
        eps = torch.randn((n,) + self.images.shape[1:], generator=self.eps_gen)
        return t, eps

    def _hoi_batch(self, indices, t, eps) -> LossBatch:
        idx = torch.from_numpy(np.asarray(indices))
        return LossBatch(self.images[idx],
                         tuple(c[idx] for c in self.conditions),
                         self.contexts[idx], t, eps)

    def _reg_batch(self, indices, t, eps) -> LossBatch:
        idx = torch.from_numpy(np.asarray(indices))
        images = self.buffer_images[idx]
        conds = blank_condition_tensors(len(indices), images.shape[-2:], images.dtype)
        return LossBatch(images, conds, self.buffer_contexts[idx], t, eps)

    def training_step(self) -> dict:
        cfg = self.config
        mixed = (cfg.w_r > 0 and self.buffer_images is not None
                 and self.mix_rng.random() < cfg.reg_mix_probability)
        if mixed:
            half = cfg.batch_size // 2
            idx = self.data_rng.integers(0, len(self.images), half)
            ridx = self.mix_rng.integers(0, len(self.buffer_images), half)
            t, eps = self._draws(half)
            if cfg.shared_reg_draws:
                rt, reps = t, eps
            else:
                rt, reps = self._draws(half)
            total, main, reg = regularized_loss(
                self.model, self.schedule,
                self._hoi_batch(idx, t, eps), self._reg_batch(ridx, rt, reps),
                cfg.w_r)
        else:
            idx = self.data_rng.integers(0, len(self.images), cfg.batch_size)
            t, eps = self._draws(cfg.batch_size)
            total, main, reg = regularized_loss(
                self.model, self.schedule, self._hoi_batch(idx, t, eps), None, 0.0)

        if not torch.isfinite(total):
            raise NumericalAbort(
                f"non-finite loss {float(total)} at step {self.step}")
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.step += 1
        return {"step": self.step,
                "loss": float(total.detach()),
                "main_loss": float(main.detach()),
                "reg_loss": 0.0 if reg is None else float(reg.detach()),
                "mixed": mixed}

    def trainer_state(self) -> dict:
        return {
            "train_config": self.config.to_dict(),
            "schedule_betas": torch.from_numpy(self.schedule.betas.copy()),
            "schedule_sigma_mode": self.schedule.sigma_mode,
            "optimizer_state": self.optimizer.state_dict(),
            "step": self.step,
            "seed": self.seed,
            "rng": {
                "data": self.data_rng.bit_generator.state,
                "mix": self.mix_rng.bit_generator.state,
                "timesteps": self.t_gen.get_state(),
                "noise": self.eps_gen.get_state(),
            },
        }

    def save(self, path) -> None:
        ckpt.save_checkpoint(path, self.model, self.trainer_state())

    @classmethod
    def resume(cls, path, dataset: ArrayDataset, buffer: BackgroundBuffer | None,
               embedder: HashTextEmbedder | None = None) -> "Trainer":
        model, state = ckpt.load_checkpoint(path)
        if state is None:
            raise ckpt.CheckpointError(f"{path}: no trainer state in checkpoint")
        schedule = NoiseSchedule.from_betas(state["schedule_betas"].numpy(),
                                            state["schedule_sigma_mode"])
        config = TrainConfig(**state["train_config"])
        trainer = cls(model, schedule, dataset, buffer, config, embedder,
                      seed=state["seed"])
        trainer.optimizer.load_state_dict(state["optimizer_state"])
        trainer.step = state["step"]
        trainer.data_rng.bit_generator.state = state["rng"]["data"]
        trainer.mix_rng.bit_generator.state = state["rng"]["mix"]
        trainer.t_gen.set_state(state["rng"]["timesteps"])
        trainer.eps_gen.set_state(state["rng"]["noise"])
        return trainer
