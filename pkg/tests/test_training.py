"""Objective, LR schedule, optimizer behavior and checkpoint persistence."""

import io
import json
import zipfile

import numpy as np
import pytest
import torch
from torch import nn

from sketchdiff.data import generate_toy_dataset, make_batch, to_velocities
from sketchdiff.diffusion import build_linear_schedule
from sketchdiff.errors import CheckpointError
from sketchdiff.networks import NoiseEstimator, NoiseEstimatorConfig
from sketchdiff.training import (
    Checkpoint,
    TrainConfig,
    fit,
    load_checkpoint,
    loss_simple,
    lr_at_epoch,
    make_frozen_loss,
    save_checkpoint,
)


def toy_batch(n=6, length=10, seed=0):
    split = generate_toy_dataset("two-class", 10, length, 0.02, seed)
    return make_batch([to_velocities(s) for s in split.train[:n]])


def ragged_batch(seed=1):
    rng = np.random.default_rng(seed)
    seqs = []
    for n in (4, 7, 10):
        xy = rng.normal(size=(n, 2))
        pen = np.full(n, -1.0)
        pen[-1] = 1.0
        from sketchdiff.data import ThreePointSketch

        seqs.append(to_velocities(ThreePointSketch(np.column_stack([xy, pen]))))
    return make_batch(seqs)


class EpsOracle(nn.Module):
    """Recovers the exact noise from the stored clean batch (test stub)."""

    weights_loaded = True

    def __init__(self, v0, schedule):
        super().__init__()
        self.v0 = v0
        self.schedule = schedule
        self._dummy = nn.Parameter(torch.zeros(1))

    def forward(self, v_t, t, z=None, lengths=None):
        a = torch.as_tensor(self.schedule.alpha, dtype=v_t.dtype)[torch.as_tensor(t)]
        while a.ndim < v_t.ndim:
            a = a.unsqueeze(-1)
        return (v_t - torch.sqrt(a) * self.v0) / torch.sqrt(1.0 - a)


class ZeroModel(nn.Module):
    weights_loaded = True

    def __init__(self):
        super().__init__()
        self._dummy = nn.Parameter(torch.zeros(1))

    def forward(self, v_t, t, z=None, lengths=None):
        return torch.zeros_like(v_t)


class TestLoss:
    def test_oracle_stub_zero_loss(self):
        batch = toy_batch()
        schedule = build_linear_schedule(50)
        model = EpsOracle(torch.as_tensor(batch.velocities, dtype=torch.float32), schedule)
        rng = torch.Generator().manual_seed(0)
        loss = loss_simple(model, None, batch, schedule, rng)
        assert float(loss) < 1e-10

    def test_zero_stub_unit_loss(self):
        # E||eps||^2 per scalar dim is 1; use a large batch for tight MC error
        split = generate_toy_dataset("circles", 600, 16, 0.02, 3)
        batch = make_batch([to_velocities(s) for s in split.train])
        schedule = build_linear_schedule(50)
        loss = loss_simple(ZeroModel(), None, batch, schedule, torch.Generator().manual_seed(1))
        assert abs(float(loss) - 1.0) < 0.05

    def test_padding_invariance(self):
        batch = ragged_batch()
        schedule = build_linear_schedule(50)
        model = NoiseEstimator(NoiseEstimatorConfig(layers=2, hidden=16, time_dim=8))
        model.init_weights(0)
        a = loss_simple(model, None, batch, schedule, torch.Generator().manual_seed(2))
        corrupted = batch.velocities.copy()
        corrupted[~batch.mask] = np.random.default_rng(9).normal(size=(np.sum(~batch.mask), 3))
        batch.velocities = corrupted
        b = loss_simple(model, None, batch, schedule, torch.Generator().manual_seed(2))
        assert float(a.detach()) == float(b.detach())

    def test_frozen_loss_deterministic(self):
        batch = ragged_batch()
        schedule = build_linear_schedule(20)
        loss_fn = make_frozen_loss(batch, schedule, seed=0)
        model = NoiseEstimator(NoiseEstimatorConfig(layers=1, hidden=16, time_dim=8))
        model.init_weights(1)
        assert loss_fn(model, batch).detach().item() == loss_fn(model, batch).detach().item()


class TestLrSchedule:
    def test_values(self):
        cfg = TrainConfig(epochs=1)
        assert lr_at_epoch(0, cfg) == pytest.approx(6e-3)
        assert lr_at_epoch(1, cfg) == pytest.approx(5.9982e-3)
        assert lr_at_epoch(2310, cfg) == pytest.approx(6e-3 * 0.9997**2310)
        assert lr_at_epoch(2310, cfg) == pytest.approx(3.0e-3, rel=2e-3)


class TestOptimizerStep:
    def test_single_step_decreases_loss(self):
        schedule = build_linear_schedule(20)
        for seed in range(20):
            batch = toy_batch(n=4, length=8, seed=seed)
            loss_fn = make_frozen_loss(batch, schedule, seed=seed)
            model = NoiseEstimator(NoiseEstimatorConfig(layers=1, hidden=16, time_dim=8))
            model.init_weights(seed)
            opt = torch.optim.AdamW(model.parameters(), lr=1e-4)
            before = loss_fn(model, batch)
            opt.zero_grad()
            before.backward()
            opt.step()
            after = loss_fn(model, batch)
            assert after.detach().item() < before.detach().item()


class TestFit:
    def _config(self, epochs=1, mode="none", seed=0):
        return TrainConfig(
            epochs=epochs,
            batch_size=16,
            seed=seed,
            mode=mode,
            T=20,
            estimator=NoiseEstimatorConfig(layers=1, hidden=16, time_dim=8),
        )

    def test_epoch0_determinism(self):
        split = generate_toy_dataset("circles", 40, 12, 0.02, 5)
        a, _ = fit(split, self._config(epochs=1))
        b, _ = fit(split, self._config(epochs=1))
        assert a.history[0]["train_loss"] == b.history[0]["train_loss"]
        assert a.history[0]["val_loss"] == b.history[0]["val_loss"]

    def test_zero_epochs_is_initialization(self):
        split = generate_toy_dataset("circles", 40, 12, 0.02, 5)
        ckpt, _ = fit(split, self._config(epochs=0))
        model = NoiseEstimator(ckpt.estimator_config)
        model.init_weights(0)
        for name, arr in ckpt.estimator_state.items():
            assert torch.equal(model.state_dict()[name], arr)

    def test_conditional_modes_run(self):
        split = generate_toy_dataset("two-class", 20, 12, 0.02, 6)
        for mode in ("sequence-encoder", "set-encoder"):
            ckpt, best = fit(split, self._config(epochs=1, mode=mode))
            assert ckpt.mode == mode
            assert ckpt.encoder_state is not None
            model, encoder = ckpt.build_models()
            assert encoder is not None


class TestCheckpointIO:
    def _ckpt(self, seed=0):
        split = generate_toy_dataset("circles", 20, 10, 0.02, seed)
        cfg = TrainConfig(
            epochs=1,
            batch_size=8,
            seed=seed,
            T=20,
            estimator=NoiseEstimatorConfig(layers=1, hidden=16, time_dim=8),
        )
        ckpt, _ = fit(split, cfg)
        return ckpt

    def test_roundtrip_bitexact_forward(self, tmp_path):
        ckpt = self._ckpt()
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        m1, _ = ckpt.build_models()
        m2, _ = loaded.build_models()
        v = torch.randn(1, 9, 3, generator=torch.Generator().manual_seed(3))
        assert torch.equal(m1(v, t=4), m2(v, t=4))

    def test_truncated_archive_rejected(self, tmp_path):
        ckpt = self._ckpt()
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_cross_precision_rejected(self, tmp_path):
        ckpt = self._ckpt()
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        # rewrite one weight entry as float64
        out = tmp_path / "m64.ckpt"
        with zipfile.ZipFile(path) as zin, zipfile.ZipFile(out, "w") as zout:
            for item in zin.infolist():
                payload = zin.read(item.filename)
                if item.filename.endswith(".npy") and "head.weight" in item.filename:
                    arr = np.load(io.BytesIO(payload)).astype(np.float64)
                    buf = io.BytesIO()
                    np.save(buf, arr)
                    payload = buf.getvalue()
                zout.writestr(item.filename, payload)
        with pytest.raises(CheckpointError, match="float32"):
            load_checkpoint(out)

    def test_version_mismatch_rejected(self, tmp_path):
        ckpt = self._ckpt()
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        out = tmp_path / "mv.ckpt"
        with zipfile.ZipFile(path) as zin, zipfile.ZipFile(out, "w") as zout:
            for item in zin.infolist():
                payload = zin.read(item.filename)
                if item.filename == "manifest.json":
                    manifest = json.loads(payload)
                    manifest["version"] = 99
                    payload = json.dumps(manifest)
                zout.writestr(item.filename, payload)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(out)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.ckpt")
