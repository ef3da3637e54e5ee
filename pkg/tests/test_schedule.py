import math

import numpy as np
import pytest
import torch

from graspdiff.schedule import (SIGMA_POSTERIOR, NoiseSchedule, forward_diffuse,
                                forward_diffuse_batch, make_linear_schedule,
                                noise_prediction_loss, reverse_step)


def test_default_schedule_length():
    sched = make_linear_schedule(1000)
    assert sched.steps == 1000
    assert sched.betas[0] == pytest.approx(1e-4)
    assert sched.betas[-1] == pytest.approx(0.02)


def test_single_step_schedule():
    b = 0.123
    sched = make_linear_schedule(1, beta_start=b, beta_end=b)
    assert sched.alpha_bars.tolist() == [1.0 - b]
    assert sched.sigmas[0] == 0.0


def test_alpha_bar_matches_explicit_product():
    sched = make_linear_schedule(10, 1e-4, 0.02)
    prod = 1.0
    for i in range(10):
        prod *= 1.0 - sched.betas[i]
    assert sched.alpha_bars[9] == pytest.approx(prod, rel=1e-12)


def test_schedule_invariants():
    for mode in ("beta", SIGMA_POSTERIOR):
        sched = make_linear_schedule(64, sigma_mode=mode)
        assert np.all(sched.betas > 0) and np.all(sched.betas < 1)
        assert np.all(np.diff(sched.alpha_bars) < 0)
        assert sched.sigmas[0] == 0.0
        assert np.all(sched.sigmas >= 0)
        rel = np.abs(sched.alpha_bars - np.cumprod(sched.alphas)) / np.cumprod(sched.alphas)
        assert rel.max() <= 1e-12


def test_posterior_sigma_below_beta_sigma():
    beta = make_linear_schedule(32)
    post = make_linear_schedule(32, sigma_mode=SIGMA_POSTERIOR)
    assert np.all(post.sigmas[1:] <= beta.sigmas[1:] + 1e-15)


def test_schedule_rejects_bad_parameters():
    with pytest.raises(ValueError):
        make_linear_schedule(0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.5, beta_end=1.0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.3, beta_end=0.2)


def test_forward_diffuse_zero_noise_limit():
    sched = make_linear_schedule(10)
    x0 = np.random.default_rng(0).normal(size=(3, 4, 4))
    out = forward_diffuse(x0, 3, np.zeros_like(x0), sched)
    np.testing.assert_allclose(out, math.sqrt(sched.alpha_bars[3]) * x0)


def test_forward_diffuse_hand_value():
    # abar = 0.75 gives sqrt(1 - abar) = 0.5 on a pure-noise input
    sched = make_linear_schedule(1, beta_start=0.25, beta_end=0.25)
    x0 = np.zeros((1, 2, 2))
    out = forward_diffuse(x0, 0, np.ones_like(x0), sched)
    np.testing.assert_allclose(out, 0.5)


def test_forward_diffuse_validates():
    sched = make_linear_schedule(10)
    x0 = np.zeros((3, 2, 2))
    with pytest.raises(ValueError):
        forward_diffuse(x0, 10, np.zeros_like(x0), sched)
    with pytest.raises(ValueError):
        forward_diffuse(x0, 0, np.zeros((3, 2, 3)), sched)


def test_reverse_step_t0_plugin():
    sched = make_linear_schedule(10)
    x = np.random.default_rng(1).normal(size=(3, 2, 2))
    out = reverse_step(x, np.zeros_like(x), 0, 0.0, sched)
    np.testing.assert_allclose(out, x / math.sqrt(1.0 - sched.betas[0]))


def test_reverse_step_matches_scalar_oracle():
    sched = make_linear_schedule(10)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 3))
    eps_hat = rng.normal(size=(2, 3, 3))
    z = rng.normal(size=(2, 3, 3))
    t = 5
    got = reverse_step(x, eps_hat, t, z, sched)
    alpha, abar, sigma = sched.alphas[t], sched.alpha_bars[t], sched.sigmas[t]
    expect = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        expect[idx] = (x[idx] - (1 - alpha) / math.sqrt(1 - abar) * eps_hat[idx]) \
            / math.sqrt(alpha) + sigma * z[idx]
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_reverse_step_deterministic_mean_with_zero_z():
    sched = make_linear_schedule(10)
    x = np.ones((1, 2, 2))
    eps_hat = np.full_like(x, 0.3)
    t = 7
    got = reverse_step(x, eps_hat, t, np.zeros_like(x), sched)
    alpha, abar = sched.alphas[t], sched.alpha_bars[t]
    np.testing.assert_allclose(
        got, (x - (1 - alpha) / math.sqrt(1 - abar) * eps_hat) / math.sqrt(alpha))


def test_single_step_roundtrip_matches_algebra():
    # reverse_step fed the true noise recovers the closed-form function of x0
    sched = make_linear_schedule(16)
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(3, 5, 5))
    eps = rng.normal(size=(3, 5, 5))
    for t in (1, 8, 15):
        x_t = forward_diffuse(x0, t, eps, sched)
        got = reverse_step(x_t, eps, t, np.zeros_like(x0), sched)
        alpha, abar = sched.alphas[t], sched.alpha_bars[t]
        abar_prev = abar / alpha
        expect = math.sqrt(abar_prev) * x0 \
            + math.sqrt(alpha) * (1 - abar_prev) / math.sqrt(1 - abar) * eps
        np.testing.assert_allclose(got, expect, atol=1e-10)


def test_loss_reductions():
    rng = np.random.default_rng(4)
    eps = rng.normal(size=(2, 3, 4, 4))
    assert noise_prediction_loss(eps, eps) == 0.0
    ones = np.ones_like(eps)
    assert noise_prediction_loss(np.zeros_like(eps), ones) == pytest.approx(1.0)
    eps_hat = rng.normal(size=eps.shape)
    acc = 0.0
    for idx in np.ndindex(eps.shape):
        acc += (eps[idx] - eps_hat[idx]) ** 2
    assert noise_prediction_loss(eps, eps_hat) == pytest.approx(acc / eps.size)


def test_forward_marginal_monte_carlo():
    # empirical per-pixel mean and variance against the closed-form marginal
    sched = make_linear_schedule(100)
    t = 50
    rng = np.random.default_rng(5)
    x0 = rng.uniform(1.5, 3.0, size=(3, 8, 8)) * rng.choice([-1, 1], size=(3, 8, 8))
    draws = 120_000
    mean_acc = np.zeros_like(x0)
    sq_acc = np.zeros_like(x0)
    chunk = 20_000
    for _ in range(draws // chunk):
        eps = rng.standard_normal((chunk,) + x0.shape)
        x_t = forward_diffuse(np.broadcast_to(x0, eps.shape), t, eps, sched)
        mean_acc += x_t.sum(axis=0)
        sq_acc += (x_t ** 2).sum(axis=0)
    mean = mean_acc / draws
    var = sq_acc / draws - mean ** 2
    abar = sched.alpha_bars[t]
    mean_rel = np.abs(mean - math.sqrt(abar) * x0) / np.abs(math.sqrt(abar) * x0)
    var_rel = np.abs(var - (1 - abar)) / (1 - abar)
    assert mean_rel.mean() < 0.01
    assert var_rel.mean() < 0.01


def test_forward_diffuse_batch_matches_scalar():
    sched = make_linear_schedule(20)
    gen = torch.Generator().manual_seed(0)
    x0 = torch.randn(4, 3, 8, 8, generator=gen)
    eps = torch.randn(4, 3, 8, 8, generator=gen)
    t = torch.tensor([0, 5, 10, 19])
    batched = forward_diffuse_batch(x0, t, eps, sched)
    for i in range(4):
        single = forward_diffuse(x0[i], int(t[i]), eps[i], sched)
        assert torch.allclose(batched[i], single, atol=1e-6)


def test_from_betas_rejects_invalid():
    with pytest.raises(ValueError):
        NoiseSchedule.from_betas(np.array([0.1, 1.2]))
