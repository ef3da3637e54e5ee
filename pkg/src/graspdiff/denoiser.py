"""Conditional U-Net noise predictor plus the structure-condition encoders.

The three condition maps each pass through their own residual encoder stack;
the weighted sum of the per-level features is added to the U-Net encoder
feature map at the end of each level, before that level's downsampling.
Text conditioning enters through cross-attention over a caller-provided
context array; timesteps through a sinusoidal embedding fed to every
residual block.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .conditions import ConditionSet


@dataclass(frozen=True)
class DenoiserConfig:
    image_channels: int = 3
    image_size: int = 32
    base_channels: int = 32
    channel_multiples: tuple[int, ...] = (1, 2, 4)
    resblocks_per_level: int = 1
    context_dim: int = 64
    context_tokens: int = 16
    # summation weights for the (skeleton, normal, segmentation) encoders
    condition_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # encoder/decoder levels that carry attention; None = all but the first
    attention_levels: tuple[int, ...] | None = None
    num_heads: int = 1

    def __post_init__(self):
        if not self.channel_multiples or any(m < 1 for m in self.channel_multiples):
            raise ValueError("channel_multiples must be non-empty with entries >= 1")
        if len(self.condition_weights) != 3:
            raise ValueError("condition_weights must have exactly three entries")
        if self.image_size % (2 ** (len(self.channel_multiples) - 1)) != 0:
            raise ValueError("image_size must be divisible by the total downsampling")

    @property
    def level_channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_multiples)

    @property
    def levels(self) -> int:
        return len(self.channel_multiples)

    def attends(self, level: int) -> bool:
        if self.attention_levels is None:
            return level > 0
        return level in self.attention_levels

    def to_dict(self) -> dict:
        return {
            "image_channels": self.image_channels,
            "image_size": self.image_size,
            "base_channels": self.base_channels,
            "channel_multiples": list(self.channel_multiples),
            "resblocks_per_level": self.resblocks_per_level,
            "context_dim": self.context_dim,
            "context_tokens": self.context_tokens,
            "condition_weights": list(self.condition_weights),
            "attention_levels": None if self.attention_levels is None
            else list(self.attention_levels),
            "num_heads": self.num_heads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        for key in ("channel_multiples", "condition_weights", "attention_levels"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _norm_groups(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shaped (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, time_dim: int | None = None,
                 padding_mode: str = "zeros"):
        super().__init__()
        self.norm1 = nn.GroupNorm(_norm_groups(in_channels), in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1,
                               padding_mode=padding_mode)
        self.time_proj = nn.Linear(time_dim, out_channels) if time_dim else None
        self.norm2 = nn.GroupNorm(_norm_groups(out_channels), out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1,
                               padding_mode=padding_mode)
        self.skip = (nn.Conv2d(in_channels, out_channels, 1)
                     if in_channels != out_channels else nn.Identity())

    def forward(self, x, t_emb=None):
        h = self.conv1(F.silu(self.norm1(x)))
        if self.time_proj is not None and t_emb is not None:
            h = h + self.time_proj(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    """Pre-norm self-attention, text cross-attention and a feed-forward tail.

    While ``anchor_index`` is set (video sampling), the self-attention keys
    and values of every batch item are prefixed with the anchor item's, so
    each frame attends to the anchor and to itself.
    """

    def __init__(self, channels: int, context_dim: int, heads: int = 1):
        super().__init__()
        if channels % heads != 0:
            raise ValueError("channels must divide evenly into heads")
        self.heads = heads
        self.scale = (channels // heads) ** -0.5
        self.norm_self = nn.LayerNorm(channels)
        self.to_qkv = nn.Linear(channels, 3 * channels, bias=False)
        self.proj_self = nn.Linear(channels, channels)
        self.norm_cross = nn.LayerNorm(channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(context_dim, channels, bias=False)
        self.to_v = nn.Linear(context_dim, channels, bias=False)
        self.proj_cross = nn.Linear(channels, channels)
        self.norm_ff = nn.LayerNorm(channels)
        self.ff = nn.Sequential(nn.Linear(channels, 2 * channels), nn.GELU(),
                                nn.Linear(2 * channels, channels))
        self.anchor_index: int | None = None

    def _attend(self, q, k, v):
        b, s, c = q.shape
        h = self.heads
        q = q.view(b, s, h, c // h).transpose(1, 2)
        k = k.view(b, k.shape[1], h, c // h).transpose(1, 2)
        v = v.view(b, v.shape[1], h, c // h).transpose(1, 2)
        weights = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = weights @ v
        return out.transpose(1, 2).reshape(b, s, c)

    def forward(self, x, context):
        b, c, hh, ww = x.shape
        tokens = x.flatten(2).transpose(1, 2)

        q, k, v = self.to_qkv(self.norm_self(tokens)).chunk(3, dim=-1)
        if self.anchor_index is not None:
            k = torch.cat([k[self.anchor_index:self.anchor_index + 1].expand_as(k), k], dim=1)
            v = torch.cat([v[self.anchor_index:self.anchor_index + 1].expand_as(v), v], dim=1)
        tokens = tokens + self.proj_self(self._attend(q, k, v))

        q = self.to_q(self.norm_cross(tokens))
        ctx_k, ctx_v = self.to_k(context), self.to_v(context)
        tokens = tokens + self.proj_cross(self._attend(q, ctx_k, ctx_v))

        tokens = tokens + self.ff(self.norm_ff(tokens))
        return tokens.transpose(1, 2).reshape(b, c, hh, ww)


class Downsample(nn.Module):
    def __init__(self, channels, padding_mode: str = "zeros"):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1,
                              padding_mode=padding_mode)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class ConditionEncoder(nn.Module):
    """Strided residual stack turning one (3, H, W) map into per-level features
    whose channel counts and resolutions match the U-Net encoder levels.

    Replicate padding keeps a spatially uniform map (in particular the vacant
    one) spatially uniform through every layer, so blank conditions shift
    features identically at every position.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        chans = cfg.level_channels
        self.stem = nn.Conv2d(3, chans[0], 3, padding=1, padding_mode="replicate")
        self.blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = chans[0]
        for i, ch in enumerate(chans):
            self.blocks.append(ResBlock(prev, ch, padding_mode="replicate"))
            if i < len(chans) - 1:
                self.downs.append(Downsample(ch, padding_mode="replicate"))
            prev = ch

    def forward(self, cmap: torch.Tensor) -> list[torch.Tensor]:
        h = self.stem(cmap)
        feats = []
        for i, block in enumerate(self.blocks):
            h = block(h)
            feats.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        return feats


class ConditionAdapter(nn.Module):
    """Three independent condition encoders combined by fixed weights."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.skeleton_enc = ConditionEncoder(cfg)
        self.normal_enc = ConditionEncoder(cfg)
        self.segmentation_enc = ConditionEncoder(cfg)
        self.register_buffer(
            "weights", torch.tensor(cfg.condition_weights, dtype=torch.float32))

    def forward(self, skeleton, normal, segmentation) -> list[torch.Tensor]:
        w_h, w_n, w_s = self.weights
        levels = []
        for h, n, s in zip(self.skeleton_enc(skeleton), self.normal_enc(normal),
                           self.segmentation_enc(segmentation)):
            levels.append(w_h * h + w_n * n + w_s * s)
        return levels


class UNet(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        chans = cfg.level_channels
        base = cfg.base_channels
        time_dim = base * 4
        self.time_mlp = nn.Sequential(nn.Linear(base, time_dim), nn.SiLU(),
                                      nn.Linear(time_dim, time_dim))
        self.stem = nn.Conv2d(cfg.image_channels, base, 3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.enc_attns = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = base
        for i, ch in enumerate(chans):
            blocks = nn.ModuleList()
            for _ in range(cfg.resblocks_per_level):
                blocks.append(ResBlock(prev, ch, time_dim))
                prev = ch
            self.enc_blocks.append(blocks)
            self.enc_attns.append(AttentionBlock(ch, cfg.context_dim, cfg.num_heads)
                                  if cfg.attends(i) else None)
            if i < len(chans) - 1:
                self.downs.append(Downsample(ch))

        mid_ch = chans[-1]
        self.mid_res1 = ResBlock(mid_ch, mid_ch, time_dim)
        self.mid_attn = AttentionBlock(mid_ch, cfg.context_dim, cfg.num_heads)
        self.mid_res2 = ResBlock(mid_ch, mid_ch, time_dim)

        self.dec_blocks = nn.ModuleList()
        self.dec_attns = nn.ModuleList()
        self.ups = nn.ModuleList()
        prev = mid_ch
        for i in reversed(range(len(chans))):
            out_ch = chans[i]
            blocks = nn.ModuleList()
            for _ in range(cfg.resblocks_per_level):
                blocks.append(ResBlock(prev + chans[i], out_ch, time_dim))
                prev = out_ch
            self.dec_blocks.append(blocks)
            self.dec_attns.append(AttentionBlock(out_ch, cfg.context_dim, cfg.num_heads)
                                  if cfg.attends(i) else None)
            if i > 0:
                self.ups.append(Upsample(out_ch))

        self.out_norm = nn.GroupNorm(_norm_groups(base), base)
        self.out_conv = nn.Conv2d(base, cfg.image_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x, t, context, cond_emb=None):
        if cond_emb is not None and len(cond_emb) != self.cfg.levels:
            raise ValueError(
                f"expected {self.cfg.levels} condition levels, got {len(cond_emb)}")
        t_emb = self.time_mlp(timestep_embedding(t, self.cfg.base_channels).to(x.dtype))

        h = self.stem(x)
        skips = []
        for i in range(self.cfg.levels):
            for block in self.enc_blocks[i]:
                h = block(h, t_emb)
            if self.enc_attns[i] is not None:
                h = self.enc_attns[i](h, context)
            if cond_emb is not None:
                h = h + cond_emb[i]
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)

        h = self.mid_res1(h, t_emb)
        h = self.mid_attn(h, context)
        h = self.mid_res2(h, t_emb)

        for j, i in enumerate(reversed(range(self.cfg.levels))):
            skip = skips.pop()
            for block in self.dec_blocks[j]:
                h = block(torch.cat([h, skip], dim=1), t_emb)
            if self.dec_attns[j] is not None:
                h = self.dec_attns[j](h, context)
            if i > 0:
                h = self.ups[j](h)

        return self.out_conv(F.silu(self.out_norm(h)))


class ConditionalDenoiser(nn.Module):
    """U-Net denoiser bundled with its condition adapter.

    ``encode_conditions`` and ``denoise`` are separable so samplers can reuse
    condition embeddings across timesteps.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        self.unet = UNet(cfg)
        self.adapter = ConditionAdapter(cfg)

    def encode_condition_tensors(self, skeleton, normal, segmentation):
        expected = (self.cfg.image_size, self.cfg.image_size)
        if tuple(skeleton.shape[-2:]) != expected:
            raise ValueError(f"condition resolution {tuple(skeleton.shape[-2:])} "
                             f"!= configured {expected}")
        return self.adapter(skeleton, normal, segmentation)

    def encode_conditions(self, cond_sets: Sequence[ConditionSet]):
        dtype = next(self.parameters()).dtype
        stacks = []
        for name in ("skeleton", "normal", "segmentation"):
            arr = np.stack([getattr(c, name) for c in cond_sets])
            stacks.append(torch.from_numpy(arr).to(dtype))
        return self.encode_condition_tensors(*stacks)

    def denoise(self, x_t, t, context, cond_emb=None):
        if not torch.isfinite(x_t).all():
            raise ValueError("non-finite values in denoiser input")
        if not torch.is_tensor(t):
            t = torch.tensor(t, dtype=torch.long)
        if t.ndim == 0:
            t = t.expand(x_t.shape[0])
        return self.unet(x_t, t, context, cond_emb)

    def forward(self, x_t, t, context, cond_sets: Sequence[ConditionSet]):
        return self.denoise(x_t, t, context, self.encode_conditions(cond_sets))

    @contextmanager
    def anchor_attention(self, anchor_index: int):
        """Route every self-attention site through [anchor; self] keys/values."""
        blocks = [m for m in self.modules() if isinstance(m, AttentionBlock)]
        for b in blocks:
            b.anchor_index = anchor_index
        try:
            yield
        finally:
            for b in blocks:
                b.anchor_index = None

    def decoder_parameter_names(self) -> set[str]:
        """Parameters trained under the decoder_only freeze policy: U-Net
        decoder half and the (newly introduced) condition encoders."""
        prefixes = ("unet.dec_blocks", "unet.dec_attns", "unet.ups",
                    "unet.out_norm", "unet.out_conv", "adapter.")
        return {name for name, _ in self.named_parameters()
                if name.startswith(prefixes)}


def build_model(cfg: DenoiserConfig, seed: int = 0) -> ConditionalDenoiser:
    """Construct a denoiser with reproducible parameter initialization."""
    torch.manual_seed(seed)
    return ConditionalDenoiser(cfg)
