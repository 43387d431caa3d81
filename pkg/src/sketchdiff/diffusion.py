"""Noise schedule and the forward/reverse diffusion machinery.

The schedule arrays are kept in float64 so the cumulative-product and
posterior-variance identities hold to ~1e-12. Step functions are plain
tensor algebra and work at whatever dtype the inputs carry; an explicit
torch.Generator is threaded through everything stochastic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from .data import (
    ThreePointSketch,
    VelocitySequence,
    quantize_pen_array,
    to_positions,
)
from .errors import ConfigError, ContractError, StateError


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with derived cumulative quantities.

    beta[t] and beta_tilde[t] are valid for t = 1..T (index 0 unused);
    alpha[t] is the cumulative product of (1 - beta) with alpha[0] = 1.
    sigma_scale multiplies beta_tilde to form the reverse-step variance.
    """

    T: int
    beta: np.ndarray  # (T+1,) float64, beta[0] = 0 sentinel
    alpha: np.ndarray  # (T+1,) float64, alpha[0] = 1
    beta_tilde: np.ndarray  # (T+1,) float64, beta_tilde[1] = 0
    sigma_scale: float = 0.8
    beta_min: float = 0.0
    beta_max: float = 0.0

    def sigma(self, t: int) -> float:
        return float(np.sqrt(self.sigma_scale * self.beta_tilde[t]))

    def with_sigma_scale(self, k: float) -> "NoiseSchedule":
        if not 0.0 <= k <= 1.0:
            raise ConfigError(f"sigma_scale must be in [0, 1], got {k}")
        return replace(self, sigma_scale=float(k))

    def to_config(self) -> dict:
        return {
            "T": self.T,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "sigma_scale": self.sigma_scale,
        }


def build_linear_schedule(T: int, sigma_scale: float = 0.8) -> NoiseSchedule:
    """Linear beta from 1e-4 * 1000/T up to 2e-2 * 1000/T over t = 1..T."""
    if T < 2:
        raise ConfigError(f"diffusion length T must be >= 2, got {T}")
    # The 1000/T scaling pushes beta past 1 for very short schedules;
    # clamp to keep every beta a valid Gaussian variance fraction.
    beta_min = 1e-4 * 1000.0 / T
    beta_max = min(2e-2 * 1000.0 / T, 0.999)
    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_min, beta_max, T)
    alpha = np.ones(T + 1, dtype=np.float64)
    alpha[1:] = np.cumprod(1.0 - beta[1:])
    beta_tilde = np.zeros(T + 1, dtype=np.float64)
    beta_tilde[1:] = (1.0 - alpha[:-1]) / (1.0 - alpha[1:]) * beta[1:]
    beta_tilde[1] = 0.0
    return NoiseSchedule(
        T=T,
        beta=beta,
        alpha=alpha,
        beta_tilde=beta_tilde,
        sigma_scale=float(sigma_scale),
        beta_min=beta_min,
        beta_max=beta_max,
    )


def _check_step(t: int, schedule: NoiseSchedule) -> None:
    if not 1 <= t <= schedule.T:
        raise ContractError(f"step t={t} outside [1, {schedule.T}]")


def forward_diffuse(
    v0: torch.Tensor, t: int, eps: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """v_t = sqrt(alpha_t) v_0 + sqrt(1 - alpha_t) eps, elementwise."""
    _check_step(t, schedule)
    if eps.shape != v0.shape:
        raise ContractError(f"noise shape {tuple(eps.shape)} != data shape {tuple(v0.shape)}")
    a = schedule.alpha[t]
    return float(np.sqrt(a)) * v0 + float(np.sqrt(1.0 - a)) * eps


def mean_from_eps(
    v_t: torch.Tensor, t: int, eps_hat: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """Reverse-kernel mean from the noise estimate."""
    _check_step(t, schedule)
    b = schedule.beta[t]
    a = schedule.alpha[t]
    coef = float(b / np.sqrt(1.0 - a))
    return (v_t - coef * eps_hat) / float(np.sqrt(1.0 - b))


def ddpm_step(
    v_t: torch.Tensor,
    t: int,
    eps_hat: torch.Tensor,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """One ancestral step with injected noise variance sigma_scale * beta_tilde.

    Uses the variance-interpolated form
        sqrt(a_{t-1}) x0_hat + sqrt(1 - a_{t-1} - sigma^2) eps_hat + sigma xi
    which at sigma_scale = 1 equals the classic posterior-mean sampler and
    at sigma_scale = 0 reduces exactly to the deterministic step, so the
    sigma = 0 chain coincides with the full-step deterministic chain.
    No noise at t = 1 (posterior variance is 0).
    """
    _check_step(t, schedule)
    a_t = schedule.alpha[t]
    a_p = schedule.alpha[t - 1]
    var = schedule.sigma_scale * schedule.beta_tilde[t]
    x0_hat = (v_t - float(np.sqrt(1.0 - a_t)) * eps_hat) / float(np.sqrt(a_t))
    coef = float(np.sqrt(max(1.0 - a_p - var, 0.0)))
    out = float(np.sqrt(a_p)) * x0_hat + coef * eps_hat
    if var > 0.0:
        noise = torch.randn(v_t.shape, generator=rng, dtype=v_t.dtype, device=v_t.device)
        out = out + float(np.sqrt(var)) * noise
    return out


def posterior_step(
    v_t: torch.Tensor,
    t: int,
    eps_hat: torch.Tensor,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """One ancestral step in the posterior-mean form:
        mean_from_eps(v_t, t, eps_hat) + sigma xi,  sigma^2 = sigma_scale * beta_tilde.

    At sigma_scale = 1 this is algebraically identical to ddpm_step. At
    sigma_scale = 0 it iterates the bare reverse-kernel mean, which
    contracts onto dominant modes instead of tracking the deterministic
    chain — the knob behind controlled abstraction.
    """
    _check_step(t, schedule)
    out = mean_from_eps(v_t, t, eps_hat, schedule)
    var = schedule.sigma_scale * schedule.beta_tilde[t]
    if var > 0.0:
        noise = torch.randn(v_t.shape, generator=rng, dtype=v_t.dtype, device=v_t.device)
        out = out + float(np.sqrt(var)) * noise
    return out


def ddim_step(
    v_t: torch.Tensor,
    t: int,
    t_prev: int,
    eps_hat: torch.Tensor,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """Deterministic update from step t down to t_prev (t_prev may be 0)."""
    _check_step(t, schedule)
    if not 0 <= t_prev < t:
        raise ContractError(f"require 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    a_t = schedule.alpha[t]
    a_p = schedule.alpha[t_prev]
    x0_hat = (v_t - float(np.sqrt(1.0 - a_t)) * eps_hat) / float(np.sqrt(a_t))
    return float(np.sqrt(a_p)) * x0_hat + float(np.sqrt(1.0 - a_p)) * eps_hat


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Uniform strided subset of steps from T down to 0 (inclusive)."""
    if not 1 <= steps <= T:
        raise ConfigError(f"steps must be in [1, {T}], got {steps}")
    ts = np.unique(np.round(np.linspace(0, T, steps + 1)).astype(int))
    return list(ts[::-1])


def reverse_chain_ddpm(
    eps_fn,
    v_start: torch.Tensor,
    t_start: int,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """Run the ancestral sampler from step t_start down to 0."""
    v = v_start
    for t in range(t_start, 0, -1):
        v = ddpm_step(v, t, eps_fn(v, t), schedule, rng)
    return v


def reverse_chain_posterior(
    eps_fn,
    v_start: torch.Tensor,
    t_start: int,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """Run the posterior-mean-form ancestral sampler from t_start down to 0."""
    v = v_start
    for t in range(t_start, 0, -1):
        v = posterior_step(v, t, eps_fn(v, t), schedule, rng)
    return v


def reverse_chain_ddim(
    eps_fn, v_start: torch.Tensor, steps: int, schedule: NoiseSchedule
) -> torch.Tensor:
    """Run the deterministic sampler over the uniform stride."""
    ts = ddim_timesteps(schedule.T, steps)
    v = v_start
    for t, t_prev in zip(ts[:-1], ts[1:]):
        v = ddim_step(v, t, t_prev, eps_fn(v, t), schedule)
    return v


def decode_velocities(v0: torch.Tensor, recenter: bool = True) -> ThreePointSketch:
    """Quantize the pen channel, integrate from origin (0, 0) and move the
    bounding box to start at the origin."""
    arr = v0.detach().cpu().double().numpy()
    pen = quantize_pen_array(arr[:, 2])
    seq = VelocitySequence(np.column_stack([arr[:, :2], pen]), origin=(0.0, 0.0))
    sketch = to_positions(seq)
    if recenter:
        pts = sketch.points.copy()
        pts[:, :2] -= pts[:, :2].min(axis=0)
        sketch = ThreePointSketch(pts)
    return sketch


def sample(
    model,
    L: int,
    sampler: str,
    steps: int,
    schedule: NoiseSchedule,
    z: torch.Tensor | None = None,
    rng: torch.Generator | None = None,
    v_init: torch.Tensor | None = None,
) -> ThreePointSketch:
    """Draw one sketch of length L from the model prior.

    `v_init` overrides the Gaussian draw at t = T (used for deterministic
    decodes and latent interpolation from the all-zeros fixed point).
    """
    if L < 2:
        raise ContractError(f"length must be >= 2, got {L}")
    if model is None or not getattr(model, "weights_loaded", False):
        raise StateError("model has no weights loaded")
    if sampler not in ("ddpm", "ddim", "posterior"):
        raise ConfigError(f"unknown sampler {sampler!r}")
    if sampler in ("ddpm", "posterior") and steps != schedule.T:
        raise ContractError(f"{sampler} sampling must use steps = T")
    if rng is None:
        rng = torch.Generator().manual_seed(0)
    if v_init is None:
        v_init = torch.randn((L, 3), generator=rng)
    v_init = v_init.to(torch.float32)

    def eps_fn(v, t):
        with torch.no_grad():
            return model(v.unsqueeze(0), t, z=None if z is None else z.unsqueeze(0))[0]

    if sampler == "ddpm":
        v0 = reverse_chain_ddpm(eps_fn, v_init, schedule.T, schedule, rng)
    elif sampler == "posterior":
        v0 = reverse_chain_posterior(eps_fn, v_init, schedule.T, schedule, rng)
    else:
        v0 = reverse_chain_ddim(eps_fn, v_init, steps, schedule)
    return decode_velocities(v0)
