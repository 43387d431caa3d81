"""Downstream procedures on a trained checkpoint: conditional
reconstruction with length-factor control, implicit conditioning, healing,
latent interpolation, low-pass creative mixing, controlled abstraction and
point-set vectorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import (
    PointSet,
    ThreePointSketch,
    VelocitySequence,
    resample_sketch,
    to_positions,
    to_velocities,
)
from .diffusion import (
    decode_velocities,
    ddpm_step,
    forward_diffuse,
    sample,
)
from .errors import ConfigError, ContractError, ModeError
from .networks import SequenceEncoder, SetEncoder, encode_sequence, encode_set
from .training import Checkpoint, scale_sketch


@dataclass
class MixSpec:
    mode: str = "latent-ddim"  # or "ilvr"
    delta: float = 0.5
    omega: int = 7
    reference: ThreePointSketch | None = None

    def __post_init__(self):
        if self.mode not in ("latent-ddim", "ilvr"):
            raise ConfigError(f"unknown mix mode {self.mode!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        if self.omega < 1 or self.omega % 2 == 0:
            raise ConfigError(f"omega must be odd and >= 1, got {self.omega}")


@dataclass
class ConditionSpec:
    step: int  # T_c or T_h
    condition: ThreePointSketch


def materialize(ckpt: Checkpoint):
    """Build (model, encoder, schedule) once per checkpoint object."""
    cached = getattr(ckpt, "_materialized", None)
    if cached is None:
        model, encoder = ckpt.build_models()
        cached = (model, encoder, ckpt.schedule())
        ckpt._materialized = cached
    return cached


def _require_mode(ckpt: Checkpoint, mode: str, what: str) -> None:
    if ckpt.mode != mode:
        raise ModeError(f"{what} requires a {mode!r} checkpoint, got {ckpt.mode!r}")


# The model operates in units where training velocities have unit std
# (checkpoint.velocity_scale); inputs are shrunk on the way in and outputs
# grown back on the way out.


def _sketch_in(ckpt: Checkpoint, sk: ThreePointSketch) -> ThreePointSketch:
    return scale_sketch(sk, 1.0 / ckpt.velocity_scale)


def _sketch_out(ckpt: Checkpoint, sk: ThreePointSketch) -> ThreePointSketch:
    return scale_sketch(sk, ckpt.velocity_scale)


def _vel_in(ckpt: Checkpoint, v: VelocitySequence) -> VelocitySequence:
    f = 1.0 / ckpt.velocity_scale
    elements = np.column_stack([v.elements[:, :2] * f, v.elements[:, 2]])
    return VelocitySequence(elements, (v.origin[0] * f, v.origin[1] * f))


def _anchor(sk: ThreePointSketch, centroid) -> ThreePointSketch:
    """Translate so the coordinate centroid sits at `centroid`; conditioned
    outputs stay where their condition was instead of the canvas corner.
    The centroid is the most noise-robust placement cue the condition
    offers, since the reverse chain only sees velocities."""
    pts = sk.points.copy()
    pts[:, :2] += np.asarray(centroid, dtype=np.float64) - pts[:, :2].mean(axis=0)
    return ThreePointSketch(pts)


def unconditional_sample(
    ckpt: Checkpoint,
    L: int,
    sampler: str = "ddim",
    steps: int = 50,
    rng: torch.Generator | None = None,
    v_init: torch.Tensor | None = None,
    z: torch.Tensor | None = None,
    sigma_scale: float | None = None,
) -> ThreePointSketch:
    """Draw one sketch from the checkpoint prior in data units."""
    model, _, schedule = materialize(ckpt)
    if sigma_scale is not None:
        schedule = schedule.with_sigma_scale(sigma_scale)
    if sampler in ("ddpm", "posterior"):
        steps = schedule.T
    out = sample(model, L, sampler, steps, schedule, z=z, rng=rng, v_init=v_init)
    return _sketch_out(ckpt, out)


def reconstruct(
    ckpt: Checkpoint,
    v: VelocitySequence,
    length_factor: float = 1.0,
    sampler: str = "ddim",
    steps: int = 50,
    rng: torch.Generator | None = None,
    v_init: torch.Tensor | None = None,
) -> ThreePointSketch:
    """Encode, then decode at round(length_factor * |V|) points.

    For factors > 1 the condition is first resampled to the target length
    and encoded at that rate: the latent otherwise pins the condition's
    per-step velocity magnitude, which the decoder follows over the
    sequence-length cue, re-traversing the shape instead of sampling it
    more finely."""
    _require_mode(ckpt, "sequence-encoder", "reconstruct")
    if length_factor < 1.0:
        raise ContractError(f"length_factor must be >= 1, got {length_factor}")
    model, encoder, schedule = materialize(ckpt)
    L = int(round(length_factor * len(v)))
    v_enc = v if L == len(v) else to_velocities(resample_sketch(to_positions(v), L))
    z = encode_sequence(_vel_in(ckpt, v_enc).elements, encoder)
    if sampler in ("ddpm", "posterior"):
        steps = schedule.T
    out = sample(model, L, sampler, steps, schedule, z=z, rng=rng, v_init=v_init)
    return _anchor(_sketch_out(ckpt, out), to_positions(v).xy.mean(axis=0))


def _condition_z(ckpt: Checkpoint, condition: ThreePointSketch):
    """Latent code for conditional checkpoints; None for unconditional."""
    model, encoder, schedule = materialize(ckpt)
    scaled = _sketch_in(ckpt, condition)
    if ckpt.mode == "none":
        return model, schedule, None
    if ckpt.mode == "sequence-encoder":
        z = encode_sequence(to_velocities(scaled).elements, encoder)
    else:
        z = encode_set(scaled.xy, encoder)
    return model, schedule, z


def implicit_condition(
    ckpt: Checkpoint, spec: ConditionSpec, rng: torch.Generator
) -> ThreePointSketch:
    """Forward-noise the condition to the given step, then run the
    ancestral reverse chain down to 0. Step 0 returns the condition as is."""
    model, schedule, z = _condition_z(ckpt, spec.condition)
    t_start = spec.step
    if not 0 <= t_start <= schedule.T:
        raise ContractError(f"conditioning step {t_start} outside [0, {schedule.T}]")
    if t_start == 0:
        return spec.condition
    v0 = torch.as_tensor(
        to_velocities(_sketch_in(ckpt, spec.condition)).elements, dtype=torch.float32
    )
    eps = torch.randn(v0.shape, generator=rng)
    v_t = forward_diffuse(v0, t_start, eps, schedule)

    def eps_fn(v, t):
        with torch.no_grad():
            return model(v.unsqueeze(0), t, z=None if z is None else z.unsqueeze(0))[0]

    v = v_t
    for t in range(t_start, 0, -1):
        v = ddpm_step(v, t, eps_fn(v, t), schedule, rng)
    out = _sketch_out(ckpt, decode_velocities(v))
    return _anchor(out, spec.condition.xy.mean(axis=0))


def heal(
    ckpt: Checkpoint, corrupted: ThreePointSketch, t_h: int, rng: torch.Generator
) -> ThreePointSketch:
    """Implicit conditioning with the corrupted sample as condition."""
    return implicit_condition(ckpt, ConditionSpec(step=t_h, condition=corrupted), rng)


def interpolate_latent(
    ckpt: Checkpoint,
    v1: VelocitySequence,
    v2: VelocitySequence,
    delta: float,
    steps: int = 50,
) -> ThreePointSketch:
    """DDIM decode of the interpolated latent from the all-zeros prior
    fixed point; fully deterministic."""
    _require_mode(ckpt, "sequence-encoder", "interpolate_latent")
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must be in [0, 1], got {delta}")
    model, encoder, schedule = materialize(ckpt)
    z1 = encode_sequence(_vel_in(ckpt, v1).elements, encoder)
    z2 = encode_sequence(_vel_in(ckpt, v2).elements, encoder)
    z = (1.0 - delta) * z1 + delta * z2
    L = max(len(v1), len(v2))
    v_init = torch.zeros((L, 3))
    out = sample(model, L, "ddim", steps, schedule, z=z, v_init=v_init)
    c1 = to_positions(v1).xy.mean(axis=0)
    c2 = to_positions(v2).xy.mean(axis=0)
    return _anchor(_sketch_out(ckpt, out), (1.0 - delta) * c1 + delta * c2)


def temporal_lowpass(x: np.ndarray, omega: int) -> np.ndarray:
    """Moving average of odd window `omega` along the first axis with edge
    replication; omega = 1 is the identity."""
    if omega < 1 or omega % 2 == 0:
        raise ConfigError(f"omega must be odd and >= 1, got {omega}")
    if omega == 1:
        return np.asarray(x, dtype=np.float64).copy()
    x = np.asarray(x, dtype=np.float64)
    half = omega // 2
    padded = np.concatenate(
        [np.repeat(x[:1], half, axis=0), x, np.repeat(x[-1:], half, axis=0)], axis=0
    )
    kernel = np.ones(omega) / omega
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        out[:, c] = np.convolve(padded[:, c], kernel, mode="valid")
    return out


def _positions(v: torch.Tensor) -> np.ndarray:
    return torch.cumsum(v[:, :2], dim=0).double().numpy()


def _velocities_from_positions(x: np.ndarray) -> torch.Tensor:
    v = np.diff(x, axis=0, prepend=np.zeros((1, 2)))
    return torch.as_tensor(v, dtype=torch.float32)


def ilvr_mix(
    ckpt: Checkpoint,
    base: ThreePointSketch,
    reference: ThreePointSketch,
    omega: int = 7,
    rng: torch.Generator | None = None,
) -> ThreePointSketch:
    """Per-step low-frequency substitution: the model proposal keeps its
    high-frequency band while the low band is taken from the forward-noised
    reference. Pen channel stays with the proposal."""
    _require_mode(ckpt, "sequence-encoder", "ilvr_mix")
    if rng is None:
        rng = torch.Generator().manual_seed(0)
    model, encoder, schedule = materialize(ckpt)
    L = len(base)
    z = encode_sequence(to_velocities(_sketch_in(ckpt, base)).elements, encoder)
    ref = resample_sketch(_sketch_in(ckpt, reference), L)
    v_ref0 = torch.as_tensor(to_velocities(ref).elements, dtype=torch.float32)

    v = torch.randn((L, 3), generator=rng)
    for t in range(schedule.T, 0, -1):
        with torch.no_grad():
            eps_hat = model(v.unsqueeze(0), t, z=z.unsqueeze(0))[0]
        v_prop = ddpm_step(v, t, eps_hat, schedule, rng)
        if t - 1 >= 1:
            eps_ref = torch.randn(v_ref0.shape, generator=rng)
            v_ref = forward_diffuse(v_ref0, t - 1, eps_ref, schedule)
        else:
            v_ref = v_ref0
        x_prop = _positions(v_prop)
        x_ref = _positions(v_ref)
        x_mixed = x_prop - temporal_lowpass(x_prop, omega) + temporal_lowpass(x_ref, omega)
        v_mixed = _velocities_from_positions(x_mixed)
        v = torch.cat([v_mixed, v_prop[:, 2:3]], dim=1)
    return _sketch_out(ckpt, decode_velocities(v))


def abstract_sample(
    ckpt: Checkpoint,
    k: float,
    L: int,
    rng: torch.Generator,
    v_init: torch.Tensor | None = None,
) -> ThreePointSketch:
    """Unconditional ancestral sampling in the posterior-mean form with the
    reverse-step variance scaled by k in [0, 1]. At k = 1 this is the exact
    ancestral sampler; k = 0 iterates the bare reverse-kernel mean, which
    contracts onto dominant modes and drops high-frequency detail."""
    _require_mode(ckpt, "none", "abstract_sample")
    if not 0.0 <= k <= 1.0:
        raise ConfigError(f"k must be in [0, 1], got {k}")
    model, _, schedule = materialize(ckpt)
    out = sample(
        model, L, "posterior", schedule.T, schedule.with_sigma_scale(k), rng=rng, v_init=v_init
    )
    return _sketch_out(ckpt, out)


def vectorize(
    ckpt: Checkpoint,
    p: PointSet,
    rng: torch.Generator,
    n_samples: int = 1,
    L: int | None = None,
) -> list[ThreePointSketch]:
    """Sample ordered stroke sequences conditioned on an unordered point
    set; samples may differ in topology while matching the geometry."""
    _require_mode(ckpt, "set-encoder", "vectorize")
    model, encoder, schedule = materialize(ckpt)
    z = encode_set(p.points / ckpt.velocity_scale, encoder)
    if L is None:
        L = int(
            ckpt.dataset_meta.get("preprocess", {}).get("target_len") or len(p)
        )
    return [
        _sketch_out(ckpt, sample(model, L, "ddpm", schedule.T, schedule, z=z, rng=rng))
        for _ in range(n_samples)
    ]
