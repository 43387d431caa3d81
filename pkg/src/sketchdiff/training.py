"""Training objective, optimizer loop and checkpoint persistence."""

from __future__ import annotations

import copy
import io
import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import DatasetSplit, SketchBatch, ThreePointSketch, make_batch, to_velocities
from .diffusion import NoiseSchedule, build_linear_schedule
from .errors import CheckpointError, ConfigError, TrainingError
from .networks import (
    NoiseEstimator,
    NoiseEstimatorConfig,
    SequenceEncoder,
    SequenceEncoderConfig,
    SetEncoder,
    SetEncoderConfig,
)

CHECKPOINT_VERSION = 1
MODES = ("none", "sequence-encoder", "set-encoder")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr0: float = 6e-3
    lr_decay: float = 0.9997
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    ema_decay: float = 0.0  # 0 disables the parameter moving average
    seed: int = 0
    mode: str = "none"
    T: int = 1000
    sigma_scale: float = 0.8
    estimator: NoiseEstimatorConfig = field(default_factory=NoiseEstimatorConfig)
    seq_encoder: SequenceEncoderConfig = field(default_factory=SequenceEncoderConfig)
    set_encoder: SetEncoderConfig = field(default_factory=SetEncoderConfig)

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")


def lr_at_epoch(e: int, config: TrainConfig) -> float:
    return config.lr0 * config.lr_decay**e


def batch_positions(batch_vel: torch.Tensor, origins: torch.Tensor) -> torch.Tensor:
    """Absolute positions: x[0] = origin, x[j+1] = x[j] + v[j]."""
    B, L, _ = batch_vel.shape
    pos = torch.zeros(B, L, 2, dtype=batch_vel.dtype)
    pos[:, 0] = origins.to(batch_vel.dtype)
    if L > 1:
        pos[:, 1:] = pos[:, :1] + torch.cumsum(batch_vel[:, :-1, :2], dim=1)
    return pos


def masked_mse(err: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Per-sample mean over valid elements and channels, then batch mean."""
    m = mask.to(err.dtype).unsqueeze(-1)
    per_sample = (err**2 * m).sum(dim=(1, 2)) / (m.sum(dim=(1, 2)) * err.shape[-1])
    return per_sample.mean()


def _encode_batch(encoder, mode: str, vel: torch.Tensor, batch: SketchBatch) -> torch.Tensor:
    lengths = torch.as_tensor(batch.lengths)
    if mode == "sequence-encoder":
        return encoder(vel, lengths=lengths)
    pos = batch_positions(vel, torch.as_tensor(batch.origins))
    return encoder(pos, mask=torch.as_tensor(batch.mask))


def loss_simple(
    model: NoiseEstimator,
    encoder,
    batch: SketchBatch,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> torch.Tensor:
    """Monte-Carlo noise-prediction loss: one (t, eps) draw per sample,
    squared error averaged over masked-in elements then over the batch."""
    dtype = next(model.parameters()).dtype
    v0 = torch.as_tensor(batch.velocities, dtype=dtype)
    mask = torch.as_tensor(batch.mask)
    lengths = torch.as_tensor(batch.lengths)
    B = v0.shape[0]

    t = torch.randint(1, schedule.T + 1, (B,), generator=rng)
    eps = torch.randn(v0.shape, generator=rng, dtype=dtype)
    a = torch.as_tensor(schedule.alpha, dtype=dtype)[t]  # (B,)
    v_t = (
        torch.sqrt(a)[:, None, None] * v0 + torch.sqrt(1.0 - a)[:, None, None] * eps
    )
    z = None
    if encoder is not None:
        mode = "sequence-encoder" if isinstance(encoder, SequenceEncoder) else "set-encoder"
        z = _encode_batch(encoder, mode, v0, batch)
    eps_hat = model(v_t, t, z=z, lengths=lengths)
    return masked_mse(eps - eps_hat, mask)


def make_frozen_loss(batch: SketchBatch, schedule: NoiseSchedule, seed: int = 0):
    """Deterministic variant of :func:`loss_simple` with the (t, eps) draws
    fixed up front; suitable for finite-difference gradient checks."""
    rng = np.random.default_rng(seed)
    B = len(batch)
    t_fixed = rng.integers(1, schedule.T + 1, size=B)
    eps_fixed = rng.standard_normal(batch.velocities.shape)

    def loss_fn(model: NoiseEstimator, b: SketchBatch) -> torch.Tensor:
        dtype = next(model.parameters()).dtype
        v0 = torch.as_tensor(b.velocities, dtype=dtype)
        mask = torch.as_tensor(b.mask)
        lengths = torch.as_tensor(b.lengths)
        t = torch.as_tensor(t_fixed)
        eps = torch.as_tensor(eps_fixed, dtype=dtype)
        a = torch.as_tensor(schedule.alpha, dtype=dtype)[t]
        v_t = torch.sqrt(a)[:, None, None] * v0 + torch.sqrt(1.0 - a)[:, None, None] * eps
        eps_hat = model(v_t, t, lengths=lengths)
        return masked_mse(eps - eps_hat, mask)

    return loss_fn


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    mode: str
    schedule_config: dict
    train_config: dict
    estimator_config: NoiseEstimatorConfig
    encoder_config: SequenceEncoderConfig | SetEncoderConfig | None
    estimator_state: dict
    encoder_state: dict | None
    epoch: int = 0
    history: list = field(default_factory=list)
    dataset_meta: dict = field(default_factory=dict)
    # coordinate divisor bringing the training velocities to unit std, so
    # the diffusion operates against a matched standard-normal prior
    velocity_scale: float = 1.0
    version: int = CHECKPOINT_VERSION

    def build_models(self) -> tuple[NoiseEstimator, nn.Module | None]:
        model = NoiseEstimator(self.estimator_config)
        model.load_state_dict({k: torch.as_tensor(v) for k, v in self.estimator_state.items()})
        model.weights_loaded = True
        model.eval()
        encoder = None
        if self.mode == "sequence-encoder":
            encoder = SequenceEncoder(self.encoder_config)
        elif self.mode == "set-encoder":
            encoder = SetEncoder(self.encoder_config)
        if encoder is not None:
            encoder.load_state_dict({k: torch.as_tensor(v) for k, v in self.encoder_state.items()})
            encoder.weights_loaded = True
            encoder.eval()
        return model, encoder

    def schedule(self) -> NoiseSchedule:
        cfg = self.schedule_config
        return build_linear_schedule(cfg["T"], sigma_scale=cfg["sigma_scale"])


def _state_to_numpy(state: dict) -> dict:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in state.items()}


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Single-file zip archive: manifest.json plus one .npy per weight."""
    manifest = {
        "version": ckpt.version,
        "mode": ckpt.mode,
        "precision": "float32",
        "schedule": ckpt.schedule_config,
        "train_config": ckpt.train_config,
        "estimator_config": asdict(ckpt.estimator_config),
        "encoder_config": asdict(ckpt.encoder_config) if ckpt.encoder_config else None,
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "dataset_meta": ckpt.dataset_meta,
        "velocity_scale": ckpt.velocity_scale,
        "weights": {
            "estimator": sorted(ckpt.estimator_state),
            "encoder": sorted(ckpt.encoder_state) if ckpt.encoder_state else [],
        },
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for prefix, state in (("estimator", ckpt.estimator_state), ("encoder", ckpt.encoder_state or {})):
            for name, arr in state.items():
                arr = np.asarray(arr, dtype=np.float32)
                buf = io.BytesIO()
                np.save(buf, arr)
                zf.writestr(f"{prefix}/{name}.npy", buf.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, FileNotFoundError, OSError) as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise CheckpointError("checkpoint archive has no manifest.json") from exc
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {manifest.get('version')} != {CHECKPOINT_VERSION}"
            )
        if manifest.get("precision") != "float32":
            raise CheckpointError(
                f"unsupported weight precision {manifest.get('precision')!r}"
            )

        def read_state(prefix: str, names: list) -> dict:
            state = {}
            for name in names:
                try:
                    arr = np.load(io.BytesIO(zf.read(f"{prefix}/{name}.npy")))
                except (KeyError, ValueError, OSError) as exc:
                    raise CheckpointError(f"corrupt weight entry {prefix}/{name}") from exc
                if arr.dtype != np.float32:
                    raise CheckpointError(
                        f"weight {prefix}/{name} has dtype {arr.dtype}, expected float32"
                    )
                state[name] = arr
            return state

        est_cfg = NoiseEstimatorConfig(**manifest["estimator_config"])
        mode = manifest["mode"]
        enc_cfg = None
        if manifest["encoder_config"] is not None:
            cls = SequenceEncoderConfig if mode == "sequence-encoder" else SetEncoderConfig
            enc_cfg = cls(**manifest["encoder_config"])
        est_state = read_state("estimator", manifest["weights"]["estimator"])
        enc_state = (
            read_state("encoder", manifest["weights"]["encoder"])
            if manifest["weights"]["encoder"]
            else None
        )
        return Checkpoint(
            mode=mode,
            schedule_config=manifest["schedule"],
            train_config=manifest["train_config"],
            estimator_config=est_cfg,
            encoder_config=enc_cfg,
            estimator_state=est_state,
            encoder_state=enc_state,
            epoch=manifest["epoch"],
            history=manifest["history"],
            dataset_meta=manifest.get("dataset_meta", {}),
            velocity_scale=float(manifest.get("velocity_scale", 1.0)),
        )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _dataset_to_sequences(sketches: list[ThreePointSketch]) -> list:
    return [to_velocities(s) for s in sketches]


def dataset_velocity_scale(sketches: list[ThreePointSketch]) -> float:
    """Std of the xy velocity channels over a dataset (pen excluded)."""
    vals = np.concatenate([to_velocities(s).elements[:, :2].ravel() for s in sketches])
    return float(max(np.std(vals), 1e-8))


def scale_sketch(sketch: ThreePointSketch, factor: float) -> ThreePointSketch:
    """Isotropically scale a sketch's coordinates (pen bits untouched)."""
    pts = sketch.points.copy()
    pts[:, :2] *= factor
    return ThreePointSketch(pts)


def _snapshot(model, encoder, config, schedule, epoch, history, dataset_meta, velocity_scale) -> Checkpoint:
    enc_cfg = None
    if config.mode == "sequence-encoder":
        enc_cfg = config.seq_encoder
    elif config.mode == "set-encoder":
        enc_cfg = config.set_encoder
    cfg_dict = asdict(config)
    return Checkpoint(
        mode=config.mode,
        schedule_config=schedule.to_config(),
        train_config=cfg_dict,
        estimator_config=config.estimator,
        encoder_config=enc_cfg,
        estimator_state=copy.deepcopy(model.state_dict()),
        encoder_state=copy.deepcopy(encoder.state_dict()) if encoder is not None else None,
        epoch=epoch,
        history=list(history),
        dataset_meta=dict(dataset_meta),
        velocity_scale=velocity_scale,
    )


def fit(dataset: DatasetSplit, config: TrainConfig, log=None) -> tuple[Checkpoint, Checkpoint]:
    """Train on `dataset.train`, validate on `dataset.val`.

    Deterministic given `config.seed` (single-threaded, fixed data order).
    Returns (final checkpoint, best-validation checkpoint).
    """
    if not dataset.train:
        raise ConfigError("training set is empty")
    schedule = build_linear_schedule(config.T, sigma_scale=config.sigma_scale)

    est_cfg = copy.deepcopy(config.estimator)
    if config.mode == "sequence-encoder":
        est_cfg.latent_dim = config.seq_encoder.latent_dim
    elif config.mode == "set-encoder":
        est_cfg.latent_dim = config.set_encoder.latent_dim
    else:
        est_cfg.latent_dim = 0
    config = copy.deepcopy(config)
    config.estimator = est_cfg

    model = NoiseEstimator(est_cfg)
    model.init_weights(config.seed)
    encoder = None
    if config.mode == "sequence-encoder":
        encoder = SequenceEncoder(config.seq_encoder)
        encoder.init_weights(config.seed + 1000)
    elif config.mode == "set-encoder":
        encoder = SetEncoder(config.set_encoder)
        encoder.init_weights(config.seed + 1000)

    params = list(model.parameters()) + (list(encoder.parameters()) if encoder else [])
    optimizer = torch.optim.AdamW(params, lr=config.lr0, weight_decay=config.weight_decay)

    # train in units where the xy velocity channels have unit std, so the
    # data scale matches the standard-normal diffusion prior
    vel_scale = dataset_velocity_scale(dataset.train)
    train_seqs = _dataset_to_sequences(
        [scale_sketch(s, 1.0 / vel_scale) for s in dataset.train]
    )
    val_batch = (
        make_batch(
            _dataset_to_sequences([scale_sketch(s, 1.0 / vel_scale) for s in dataset.val])
        )
        if dataset.val
        else None
    )

    order_rng = np.random.default_rng(config.seed)
    train_gen = torch.Generator().manual_seed(config.seed + 1)
    history: list[dict] = []
    dataset_meta = dict(dataset.meta)

    def val_loss(epoch: int) -> float | None:
        if val_batch is None:
            return None
        gen = torch.Generator().manual_seed(config.seed * 100003 + epoch)
        model.eval()
        if encoder is not None:
            encoder.eval()
        with torch.no_grad():
            return float(loss_simple(model, encoder, val_batch, schedule, gen))

    best_val = float("inf")
    best_ckpt = _snapshot(model, encoder, config, schedule, 0, history, dataset_meta, vel_scale)

    # exponential moving average of the weights: denoising quality at
    # sample time is far more stable under the averaged parameters than
    # under the last SGD iterate
    ema: dict[str, torch.Tensor] | None = None
    if config.ema_decay > 0:
        ema = {n: p.detach().clone() for n, p in model.named_parameters()}
        if encoder is not None:
            ema.update({f"enc.{n}": p.detach().clone() for n, p in encoder.named_parameters()})

    def ema_update() -> None:
        if ema is None:
            return
        d = config.ema_decay
        with torch.no_grad():
            for n, p in model.named_parameters():
                ema[n].mul_(d).add_(p.detach(), alpha=1.0 - d)
            if encoder is not None:
                for n, p in encoder.named_parameters():
                    ema[f"enc.{n}"].mul_(d).add_(p.detach(), alpha=1.0 - d)

    def ema_apply() -> None:
        if ema is None:
            return
        with torch.no_grad():
            for n, p in model.named_parameters():
                p.copy_(ema[n])
            if encoder is not None:
                for n, p in encoder.named_parameters():
                    p.copy_(ema[f"enc.{n}"])

    for epoch in range(config.epochs):
        lr = lr_at_epoch(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        if encoder is not None:
            encoder.train()
        perm = order_rng.permutation(len(train_seqs))
        epoch_losses = []
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = make_batch([train_seqs[i] for i in idx])
            optimizer.zero_grad(set_to_none=True)
            loss = loss_simple(model, encoder, batch, schedule, train_gen)
            if not torch.isfinite(loss):
                err = TrainingError(f"non-finite loss at epoch {epoch}")
                err.checkpoint = _snapshot(
                    model, encoder, config, schedule, epoch, history, dataset_meta, vel_scale
                )
                raise err
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()
            ema_update()
            epoch_losses.append(loss.item())
        vl = val_loss(epoch)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": vl,
            "lr": lr,
        }
        history.append(record)
        if log is not None:
            log(record)
        if vl is not None and vl < best_val:
            best_val = vl
            best_ckpt = _snapshot(
                model, encoder, config, schedule, epoch + 1, history, dataset_meta, vel_scale
            )

    ema_apply()
    final = _snapshot(
        model, encoder, config, schedule, config.epochs, history, dataset_meta, vel_scale
    )
    if best_val == float("inf"):
        best_ckpt = final
    return final, best_ckpt
