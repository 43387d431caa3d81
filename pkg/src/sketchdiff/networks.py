"""Parametric components: noise estimator, sequence/set encoders, time
embedding, and a finite-difference gradient checker.

All modules are ordinary torch modules kept at float32 for training and
persistence; the gradient checker promotes a scratch copy to float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import ConfigError, ContractError, GradientCheckError


def time_embedding(t: int | torch.Tensor, dim: int) -> torch.Tensor:
    """Interleaved sin/cos features of the diffusion step at geometrically
    spaced frequencies: entry 2i = sin(t / 10000^(2i/dim)), 2i+1 = cos."""
    if dim % 2 != 0:
        raise ConfigError(f"time embedding dim must be even, got {dim}")
    tt = torch.as_tensor(t, dtype=torch.float64)
    scalar = tt.ndim == 0
    tt = tt.reshape(-1, 1)
    i = torch.arange(dim // 2, dtype=torch.float64)
    freq = torch.pow(10000.0, 2.0 * i / dim)
    ang = tt / freq  # (B, dim/2)
    emb = torch.empty(tt.shape[0], dim, dtype=torch.float64)
    emb[:, 0::2] = torch.sin(ang)
    emb[:, 1::2] = torch.cos(ang)
    emb = emb.to(torch.get_default_dtype())
    return emb[0] if scalar else emb


def seed_parameters(module: nn.Module, seed: int) -> None:
    """Deterministically (re)initialize all parameters from `seed`.

    Matrices get uniform +-1/sqrt(fan_in); vectors (biases) get zeros.
    Modules may override specific tensors afterwards (e.g. output heads).
    """
    gen = torch.Generator().manual_seed(seed)
    for _, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if param.ndim >= 2:
                bound = 1.0 / math.sqrt(param.shape[-1])
                param.uniform_(-bound, bound, generator=gen)
            else:
                param.zero_()


@dataclass
class NoiseEstimatorConfig:
    layers: int = 2
    hidden: int = 48
    time_dim: int = 16
    latent_dim: int = 0  # 0 = unconditional

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 8:
            raise ConfigError(f"hidden must be >= 8, got {self.hidden}")
        if self.time_dim % 2 != 0:
            raise ConfigError(f"time_dim must be even, got {self.time_dim}")


class NoiseEstimator(nn.Module):
    """Bidirectional GRU stack predicting the per-element noise.

    Per-element input is [v; absolute position (cumulative sum of v);
    time embedding; optional latent], with the time embedding (and latent)
    re-concatenated at the input of every recurrent layer. Non-causal by
    construction: every output may depend on every input element.
    """

    def __init__(self, config: NoiseEstimatorConfig):
        super().__init__()
        self.config = config
        self.weights_loaded = False
        cond = config.time_dim + config.latent_dim
        self.grus = nn.ModuleList()
        in_size = 5 + cond
        for _ in range(config.layers):
            self.grus.append(
                nn.GRU(in_size, config.hidden, batch_first=True, bidirectional=True)
            )
            in_size = 2 * config.hidden + cond
        self.head = nn.Linear(2 * config.hidden, 3)

    def init_weights(self, seed: int) -> None:
        seed_parameters(self, seed)
        # Near-zero output head so the initial noise estimate is ~0.
        gen = torch.Generator().manual_seed(seed + 1)
        with torch.no_grad():
            self.head.weight.uniform_(-1e-3, 1e-3, generator=gen)
            self.head.bias.zero_()
        self.weights_loaded = True

    def forward(
        self,
        v: torch.Tensor,
        t: int | torch.Tensor,
        z: torch.Tensor | None = None,
        lengths: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if v.ndim != 3 or v.shape[-1] != 3:
            raise ContractError(f"expected (B, L, 3) input, got {tuple(v.shape)}")
        if self.config.latent_dim == 0 and z is not None:
            raise ConfigError("latent code passed to an unconditional estimator")
        if self.config.latent_dim > 0 and z is None:
            raise ConfigError("conditional estimator requires a latent code")
        B, L, _ = v.shape
        x = torch.cumsum(v[..., :2], dim=1)
        temb = time_embedding(t, self.config.time_dim).to(v.dtype)
        if temb.ndim == 1:
            temb = temb.expand(B, -1)
        cond = temb.unsqueeze(1).expand(B, L, -1)
        if z is not None:
            cond = torch.cat([cond, z.to(v.dtype).unsqueeze(1).expand(B, L, -1)], dim=-1)
        h = torch.cat([v, x], dim=-1)
        for gru in self.grus:
            inp = torch.cat([h, cond], dim=-1)
            if lengths is not None:
                packed = pack_padded_sequence(
                    inp, lengths.cpu(), batch_first=True, enforce_sorted=False
                )
                out, _ = gru(packed)
                h, _ = pad_packed_sequence(out, batch_first=True, total_length=L)
            else:
                h, _ = gru(inp)
        return self.head(h)


@dataclass
class SequenceEncoderConfig:
    layers: int = 1
    hidden: int = 64
    latent_dim: int = 64


class SequenceEncoder(nn.Module):
    """Bi-GRU over [v; absolute position]; both final hidden states are
    concatenated and projected to the latent code."""

    def __init__(self, config: SequenceEncoderConfig):
        super().__init__()
        self.config = config
        self.weights_loaded = False
        self.gru = nn.GRU(
            5, config.hidden, num_layers=config.layers, batch_first=True, bidirectional=True
        )
        self.proj = nn.Linear(2 * config.hidden, config.latent_dim)

    def init_weights(self, seed: int) -> None:
        seed_parameters(self, seed)
        self.weights_loaded = True

    def forward(self, v: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        if v.ndim != 3 or v.shape[-1] != 3:
            raise ContractError(f"expected (B, L, 3) input, got {tuple(v.shape)}")
        if v.shape[1] < 2:
            raise ContractError("sequence encoder needs length >= 2")
        x = torch.cumsum(v[..., :2], dim=1)
        inp = torch.cat([v, x], dim=-1)
        if lengths is not None:
            packed = pack_padded_sequence(
                inp, lengths.cpu(), batch_first=True, enforce_sorted=False
            )
            _, h_n = self.gru(packed)
        else:
            _, h_n = self.gru(inp)
        # h_n: (layers * 2, B, hidden); take the last layer's two directions.
        fwd, bwd = h_n[-2], h_n[-1]
        return self.proj(torch.cat([fwd, bwd], dim=-1))


@dataclass
class SetEncoderConfig:
    hidden: int = 128
    blocks: int = 2
    latent_dim: int = 64


class SetEncoder(nn.Module):
    """Permutation-invariant point-set encoder.

    Elementwise feature extractor, then context blocks that mix a
    max-pooled global summary back into each point, then coordinate-wise
    max pooling and a projection. Max pooling makes the invariance exact
    (bit-for-bit) and idempotent under duplicated points.
    """

    def __init__(self, config: SetEncoderConfig):
        super().__init__()
        self.config = config
        self.weights_loaded = False
        h = config.hidden
        self.lift = nn.Sequential(nn.Linear(2, h), nn.ReLU(), nn.Linear(h, h))
        self.blocks = nn.ModuleList(
            [nn.Sequential(nn.Linear(2 * h, h), nn.ReLU(), nn.Linear(h, h)) for _ in range(config.blocks)]
        )
        self.proj = nn.Linear(h, config.latent_dim)

    def init_weights(self, seed: int) -> None:
        seed_parameters(self, seed)
        self.weights_loaded = True

    @staticmethod
    def _masked_max(h: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
        if mask is not None:
            h = h.masked_fill(~mask.unsqueeze(-1), float("-inf"))
        return h.max(dim=1).values

    def forward(self, points: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if points.ndim != 3 or points.shape[-1] != 2:
            raise ContractError(f"expected (B, N, 2) input, got {tuple(points.shape)}")
        if points.shape[1] < 2:
            raise ContractError("set encoder needs at least 2 points")
        h = self.lift(points)
        for block in self.blocks:
            g = self._masked_max(h, mask)  # (B, H)
            h = block(torch.cat([h, g.unsqueeze(1).expand_as(h)], dim=-1))
        return self.proj(self._masked_max(h, mask))


def encode_sequence(v: np.ndarray | torch.Tensor, encoder: SequenceEncoder) -> torch.Tensor:
    """Latent code for a single (L, 3) velocity array."""
    vt = torch.as_tensor(np.asarray(v), dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        return encoder(vt)[0]


def encode_set(points: np.ndarray | torch.Tensor, encoder: SetEncoder) -> torch.Tensor:
    """Latent code for a single (N, 2) point array (order-insensitive)."""
    pt = torch.as_tensor(np.asarray(points), dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        return encoder(pt)[0]


@dataclass
class GradientCheckReport:
    n_probed: int
    max_rel_err: float
    frac_ok: float
    worst: list = field(default_factory=list)
    passed: bool = False


def check_gradients(
    model: nn.Module,
    loss_fn,
    probe_batch,
    n_probe: int = 300,
    fd_step: float = 1e-4,
    tol: float = 1e-3,
    min_frac_ok: float = 0.99,
    seed: int = 0,
    raise_on_failure: bool = True,
) -> GradientCheckReport:
    """Compare autograd parameter gradients of `loss_fn(model, probe_batch)`
    against central finite differences on randomly probed coordinates.

    The model is promoted to float64 in place; pass a scratch copy.
    `loss_fn` must be deterministic (no internal randomness).
    """
    model.double()
    model.zero_grad(set_to_none=True)
    loss = loss_fn(model, probe_batch)
    loss.backward()

    params = [p for _, p in sorted(model.named_parameters(), key=lambda kv: kv[0])]
    names = [n for n, _ in sorted(model.named_parameters(), key=lambda kv: kv[0])]
    sizes = np.array([p.numel() for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(total, size=min(n_probe, total), replace=False)

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    errors = []
    with torch.no_grad():
        for fi in flat_idx:
            pi = int(np.searchsorted(offsets, fi, side="right") - 1)
            local = int(fi - offsets[pi])
            p = params[pi]
            orig = p.view(-1)[local].item()
            analytic = p.grad.view(-1)[local].item() if p.grad is not None else 0.0
            p.view(-1)[local] = orig + fd_step
            lp = loss_fn(model, probe_batch).item()
            p.view(-1)[local] = orig - fd_step
            lm = loss_fn(model, probe_batch).item()
            p.view(-1)[local] = orig
            fd = (lp - lm) / (2.0 * fd_step)
            denom = max(abs(analytic), abs(fd), 1e-8)
            rel = abs(analytic - fd) / denom
            errors.append((rel, names[pi], local, analytic, fd))

    errors.sort(reverse=True)
    rels = np.array([e[0] for e in errors])
    frac_ok = float(np.mean(rels < tol))
    report = GradientCheckReport(
        n_probed=len(errors),
        max_rel_err=float(rels.max()),
        frac_ok=frac_ok,
        worst=errors[:5],
        passed=frac_ok >= min_frac_ok,
    )
    if raise_on_failure and not report.passed:
        raise GradientCheckError(
            f"gradient check failed: {frac_ok:.3%} within tol, worst {errors[:3]}"
        )
    return report
