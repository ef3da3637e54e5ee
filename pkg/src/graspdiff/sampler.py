"""Ancestral sampling with classifier-free guidance, plus the anchor-frame
cross-attention mode for frame-consistent video generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .conditions import ConditionSet, blank_conditions
from .denoiser import ConditionalDenoiser
from .schedule import NoiseSchedule, reverse_step
from .seeding import derive_torch_generator
from .text import HashTextEmbedder
from .trainer import NumericalAbort


@dataclass(frozen=True)
class GuidanceSpec:
    scale: float = 7.5
    unconditional_caption: str = ""
    use_blank_conditions: bool = True

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale < 0:
            raise ValueError("guidance scale must be finite and non-negative")


@dataclass(frozen=True)
class VideoSamplingSpec:
    frame_count: int
    anchor_index: int
    shared_initial_noise: bool = True

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if not 0 <= self.anchor_index < self.frame_count:
            raise ValueError("anchor_index outside [0, frame_count)")


def guided_epsilon(eps_cond: torch.Tensor, eps_uncond: torch.Tensor,
                   scale: float) -> torch.Tensor:
    """eps_uncond + scale * (eps_cond - eps_uncond); the identities at scale
    0 and 1 hold exactly."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance branches must share one shape")
    if scale == 0.0:
        return eps_uncond
    if scale == 1.0:
        return eps_cond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def _context_pair(model, caption, guidance, embedder, batch):
    embedder = embedder or HashTextEmbedder(model.cfg.context_dim,
                                            model.cfg.context_tokens)
    dtype = next(model.parameters()).dtype
    ctx = torch.from_numpy(embedder.embed(caption)).to(dtype)
    uncond_ctx = torch.from_numpy(
        embedder.embed(guidance.unconditional_caption)).to(dtype)
    return (ctx.expand(batch, -1, -1).contiguous(),
            uncond_ctx.expand(batch, -1, -1).contiguous())


def _check_finite(x: torch.Tensor, t: int) -> None:
    if not torch.isfinite(x).all():
        raise NumericalAbort(f"non-finite state while denoising at step {t}")


@torch.no_grad()
def sample(model: ConditionalDenoiser, schedule: NoiseSchedule,
           conds: ConditionSet, caption: str, guidance: GuidanceSpec,
           seed: int, embedder: HashTextEmbedder | None = None,
           conditional_only: bool = False) -> np.ndarray:
    """Full reverse chain from Gaussian noise; two denoiser evaluations per
    step (conditional and vacant-condition unconditional) blended by the
    guidance scale.  Returns a (C, H, W) array clamped to [-1, 1].

    ``conditional_only`` skips the unconditional branch entirely (reference
    path for the scale == 1 identity).
    """
    model.eval()
    cfg = model.cfg
    dtype = next(model.parameters()).dtype
    conds.validate((cfg.image_size, cfg.image_size))

    cond_emb = model.encode_conditions([conds])
    blank_emb = None
    if not conditional_only:
        if guidance.use_blank_conditions:
            blank = blank_conditions((cfg.image_size, cfg.image_size))
        else:
            blank = conds
        blank_emb = model.encode_conditions([blank])
    ctx, uncond_ctx = _context_pair(model, caption, guidance, embedder, 1)

    gen = derive_torch_generator(seed, "sampling")
    shape = (1, cfg.image_channels, cfg.image_size, cfg.image_size)
    x = torch.randn(shape, generator=gen, dtype=dtype)
    for t in reversed(range(schedule.steps)):
        eps_cond = model.denoise(x, t, ctx, cond_emb)
        if conditional_only:
            eps = eps_cond
        else:
            eps_uncond = model.denoise(x, t, uncond_ctx, blank_emb)
            eps = guided_epsilon(eps_cond, eps_uncond, guidance.scale)
        z = torch.randn(shape, generator=gen, dtype=dtype) if t > 0 \
            else torch.zeros(shape, dtype=dtype)
        x = reverse_step(x, eps, t, z, schedule)
        _check_finite(x, t)
    return x.clamp(-1.0, 1.0)[0].numpy()


@torch.no_grad()
def sample_batch(model: ConditionalDenoiser, schedule: NoiseSchedule,
                 conds_list: list[ConditionSet], captions: list[str],
                 guidance: GuidanceSpec, seed: int,
                 embedder: HashTextEmbedder | None = None) -> np.ndarray:
    """Independent samples denoised together for throughput; one noise stream
    shared by the whole batch.  Returns (B, C, H, W) in [-1, 1]."""
    model.eval()
    cfg = model.cfg
    if len(conds_list) != len(captions):
        raise ValueError("conditions and captions differ in count")
    batch = len(conds_list)
    dtype = next(model.parameters()).dtype
    for c in conds_list:
        c.validate((cfg.image_size, cfg.image_size))
    embedder = embedder or HashTextEmbedder(cfg.context_dim, cfg.context_tokens)

    cond_emb = model.encode_conditions(conds_list)
    blank = blank_conditions((cfg.image_size, cfg.image_size))
    blank_emb = model.encode_conditions([blank] * batch)
    ctx = torch.from_numpy(embedder.embed_batch(captions)).to(dtype)
    uncond_ctx = torch.from_numpy(
        embedder.embed(guidance.unconditional_caption)).to(dtype)
    uncond_ctx = uncond_ctx.expand(batch, -1, -1).contiguous()

    gen = derive_torch_generator(seed, "sampling")
    shape = (batch, cfg.image_channels, cfg.image_size, cfg.image_size)
    x = torch.randn(shape, generator=gen, dtype=dtype)
    for t in reversed(range(schedule.steps)):
        eps_cond = model.denoise(x, t, ctx, cond_emb)
        eps_uncond = model.denoise(x, t, uncond_ctx, blank_emb)
        eps = guided_epsilon(eps_cond, eps_uncond, guidance.scale)
        z = torch.randn(shape, generator=gen, dtype=dtype) if t > 0 \
            else torch.zeros_like(x)
        x = reverse_step(x, eps, t, z, schedule)
        _check_finite(x, t)
    return x.clamp(-1.0, 1.0).numpy()


@torch.no_grad()
def sample_video(model: ConditionalDenoiser, schedule: NoiseSchedule,
                 per_frame_conds: list[ConditionSet], caption: str,
                 guidance: GuidanceSpec, spec: VideoSamplingSpec, seed: int,
                 embedder: HashTextEmbedder | None = None,
                 anchor_attention: bool = True) -> np.ndarray:
    """Frames denoised in lockstep; every self-attention site sees the anchor
    frame's keys/values prefixed to its own.  Returns (F, C, H, W) in [-1, 1].

    ``anchor_attention=False`` runs plain per-frame self-attention with
    otherwise identical draws, the reference for consistency comparisons.
    """
    model.eval()
    cfg = model.cfg
    if len(per_frame_conds) != spec.frame_count:
        raise ValueError("per_frame_conds length must equal frame_count")
    dtype = next(model.parameters()).dtype
    frames = spec.frame_count
    for c in per_frame_conds:
        c.validate((cfg.image_size, cfg.image_size))

    cond_emb = model.encode_conditions(per_frame_conds)
    blank = blank_conditions((cfg.image_size, cfg.image_size))
    blank_emb = model.encode_conditions([blank] * frames)
    ctx, uncond_ctx = _context_pair(model, caption, guidance, embedder, frames)

    gen = derive_torch_generator(seed, "sampling")
    one = (1, cfg.image_channels, cfg.image_size, cfg.image_size)

    def draw():
        if spec.shared_initial_noise:
            return torch.randn(one, generator=gen, dtype=dtype).expand(frames, -1, -1, -1)
        return torch.randn((frames,) + one[1:], generator=gen, dtype=dtype)

    x = draw().contiguous()
    for t in reversed(range(schedule.steps)):
        if anchor_attention:
            with model.anchor_attention(spec.anchor_index):
                eps_cond = model.denoise(x, t, ctx, cond_emb)
                eps_uncond = model.denoise(x, t, uncond_ctx, blank_emb)
        else:
            eps_cond = model.denoise(x, t, ctx, cond_emb)
            eps_uncond = model.denoise(x, t, uncond_ctx, blank_emb)
        eps = guided_epsilon(eps_cond, eps_uncond, guidance.scale)
        z = draw() if t > 0 else torch.zeros_like(x)
        x = reverse_step(x, eps, t, z, schedule)
        _check_finite(x, t)
    return x.clamp(-1.0, 1.0).numpy()
