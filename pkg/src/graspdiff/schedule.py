"""Closed-form DDPM arithmetic: noise schedules, forward noising, reverse steps.

Index convention: t runs over {0, ..., T-1} with t = T-1 the noisiest step.
All schedule coefficients are kept in float64; the array-valued operations
accept either numpy arrays or torch tensors and preserve their dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_BETA = "beta"            # sigma_t^2 = beta_t (upper-bound variance)
SIGMA_POSTERIOR = "posterior"  # sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha/alpha_bar/sigma sequences of a discrete diffusion.

    Invariants (enforced by ``validate``): betas in (0, 1), alpha_bars strictly
    decreasing and equal to the running product of alphas, sigmas >= 0 with
    sigmas[0] == 0 so the final denoising step adds no noise.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray
    sigma_mode: str = SIGMA_BETA

    @property
    def steps(self) -> int:
        return len(self.betas)

    def validate(self) -> None:
        if self.betas.ndim != 1 or self.steps < 1:
            raise ValueError("schedule must contain at least one step")
        for name, arr in (("alphas", self.alphas), ("alpha_bars", self.alpha_bars),
                          ("sigmas", self.sigmas)):
            if arr.shape != self.betas.shape:
                raise ValueError(f"{name} length does not match betas")
        if np.any(self.betas <= 0.0) or np.any(self.betas >= 1.0):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(self.alpha_bars) >= 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        prod = np.cumprod(self.alphas)
        rel = np.abs(self.alpha_bars - prod) / np.abs(prod)
        if np.max(rel) > 1e-12:
            raise ValueError("alpha_bars deviate from the cumulative alpha product")
        if np.any(self.sigmas < 0.0) or self.sigmas[0] != 0.0:
            raise ValueError("sigmas must be non-negative with sigmas[0] == 0")

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.steps:
            raise ValueError(f"step index {t} outside [0, {self.steps})")
        return t

    @classmethod
    def from_betas(cls, betas: np.ndarray, sigma_mode: str = SIGMA_BETA) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        if sigma_mode == SIGMA_BETA:
            variances = betas.copy()
        elif sigma_mode == SIGMA_POSTERIOR:
            alpha_bars_prev = np.concatenate(([1.0], alpha_bars[:-1]))
            variances = (1.0 - alpha_bars_prev) / (1.0 - alpha_bars) * betas
        else:
            raise ValueError(f"unknown sigma_mode {sigma_mode!r}")
        variances[0] = 0.0
        schedule = cls(betas, alphas, alpha_bars, np.sqrt(variances), sigma_mode)
        schedule.validate()
        return schedule


def make_linear_schedule(steps: int = DEFAULT_STEPS,
                         beta_start: float = DEFAULT_BETA_START,
                         beta_end: float = DEFAULT_BETA_END,
                         sigma_mode: str = SIGMA_BETA) -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end inclusive."""
    if steps < 1:
        raise ValueError("steps must be a positive integer")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("require 0 < beta_start <= beta_end < 1")
    if sigma_mode not in (SIGMA_BETA, SIGMA_POSTERIOR):
        raise ValueError(f"unknown sigma_mode {sigma_mode!r}")

    betas = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    return NoiseSchedule.from_betas(betas, sigma_mode)


def _check_like(a, b, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what}: shape {tuple(a.shape)} != {tuple(b.shape)}")


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule):
    """Sample of q(x_t | x_0): sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    t = schedule.check_step(t)
    _check_like(eps, x0, "eps vs x0")
    abar = float(schedule.alpha_bars[t])
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps


def reverse_step(x_t, eps_hat, t: int, z, schedule: NoiseSchedule):
    """One ancestral denoising step.

    Returns (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
    + sigma_t * z.  Callers pass z = 0 at t = 0.
    """
    t = schedule.check_step(t)
    _check_like(eps_hat, x_t, "eps_hat vs x_t")
    if not np.isscalar(z):
        _check_like(z, x_t, "z vs x_t")
    alpha = float(schedule.alphas[t])
    abar = float(schedule.alpha_bars[t])
    sigma = float(schedule.sigmas[t])
    mean = (x_t - ((1.0 - alpha) / math.sqrt(1.0 - abar)) * eps_hat) / math.sqrt(alpha)
    if sigma == 0.0:
        return mean
    return mean + sigma * z


def forward_diffuse_batch(x0, t_indices, eps, schedule: NoiseSchedule):
    """Batched forward noising with a per-sample timestep vector.

    x0/eps are torch tensors shaped (B, C, H, W); t_indices is a length-B
    integer tensor.  Used by the trainer; the scalar-t ``forward_diffuse``
    covers everything else.
    """
    import torch

    _check_like(eps, x0, "eps vs x0")
    t = torch.as_tensor(t_indices, dtype=torch.long)
    if t.ndim != 1 or t.shape[0] != x0.shape[0]:
        raise ValueError("t_indices must be a length-B vector")
    if t.min() < 0 or t.max() >= schedule.steps:
        raise ValueError("timestep index outside the schedule")
    abar = torch.from_numpy(schedule.alpha_bars)[t]
    c_signal = abar.sqrt().to(x0.dtype).view(-1, 1, 1, 1)
    c_noise = (1.0 - abar).sqrt().to(x0.dtype).view(-1, 1, 1, 1)
    return c_signal * x0 + c_noise * eps


def noise_prediction_loss(eps, eps_hat):
    """Mean squared error between the drawn noise and the prediction."""
    _check_like(eps_hat, eps, "eps_hat vs eps")
    return ((eps - eps_hat) ** 2).mean()
