"""Desk-scale quantitative harness: reconstruction-CD curves, Fréchet
feature distance over a small trained classifier, implicit-conditioning
class consistency, and abstraction energy."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .applications import (
    ConditionSpec,
    implicit_condition,
    reconstruct,
    unconditional_sample,
)
from .data import (
    DatasetSplit,
    PointSet,
    ThreePointSketch,
    chamfer_distance,
    make_batch,
    to_point_set,
    to_velocities,
)
from .errors import ContractError, HarnessError, MetricError
from .networks import seed_parameters
from .training import Checkpoint


@dataclass
class MetricReport:
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    seed: int = 0
    checkpoint_fingerprint: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "metrics": self.metrics,
                "tables": self.tables,
                "seed": self.seed,
                "checkpoint_fingerprint": self.checkpoint_fingerprint,
            },
            indent=2,
            sort_keys=True,
        )


def checkpoint_fingerprint(ckpt: Checkpoint) -> str:
    h = hashlib.sha256()
    for name in sorted(ckpt.estimator_state):
        h.update(name.encode())
        h.update(np.ascontiguousarray(ckpt.estimator_state[name]).tobytes())
    for name in sorted(ckpt.encoder_state or {}):
        h.update(name.encode())
        h.update(np.ascontiguousarray(ckpt.encoder_state[name]).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Reconstruction CD vs sampling-rate factor
# ---------------------------------------------------------------------------


def cd_vs_rate_curve(
    ckpt: Checkpoint,
    test_set: list[ThreePointSketch],
    factors: list[float],
    steps: int = 50,
    seed: int = 0,
    sampler: str = "ddim",
) -> dict:
    """Mean Chamfer distance between each test sketch and its
    reconstruction, per length factor."""
    rows = {}
    for f in factors:
        rng = torch.Generator().manual_seed(seed)
        cds = []
        for sk in test_set:
            rec = reconstruct(
                ckpt, to_velocities(sk), length_factor=f, sampler=sampler, steps=steps, rng=rng
            )
            cds.append(
                chamfer_distance(PointSet(sk.xy.copy()), PointSet(rec.xy.copy()))
            )
        rows[f] = float(np.mean(cds))
    return rows


# ---------------------------------------------------------------------------
# Toy classifier (feature network for Frechet distance / consistency)
# ---------------------------------------------------------------------------


class ToyClassifier(nn.Module):
    """Small Bi-GRU classifier over velocity sequences; exposes the
    penultimate feature vector for the Frechet metric."""

    def __init__(self, n_classes: int, hidden: int = 32, feature_dim: int = 32):
        super().__init__()
        self.gru = nn.GRU(5, hidden, batch_first=True, bidirectional=True)
        self.feature = nn.Linear(2 * hidden, feature_dim)
        self.out = nn.Linear(feature_dim, n_classes)
        self.feature_dim = feature_dim

    def features(self, v: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        x = torch.cumsum(v[..., :2], dim=1)
        inp = torch.cat([v, x], dim=-1)
        if lengths is not None:
            packed = pack_padded_sequence(
                inp, lengths.cpu(), batch_first=True, enforce_sorted=False
            )
            _, h_n = self.gru(packed)
        else:
            _, h_n = self.gru(inp)
        h = torch.cat([h_n[-2], h_n[-1]], dim=-1)
        return torch.tanh(self.feature(h))

    def forward(self, v: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        return self.out(self.features(v, lengths))


def _sketches_to_tensors(sketches: list[ThreePointSketch]):
    batch = make_batch([to_velocities(s) for s in sketches])
    return (
        torch.as_tensor(batch.velocities, dtype=torch.float32),
        torch.as_tensor(batch.lengths),
    )


def classify(clf: ToyClassifier, sketches: list[ThreePointSketch]) -> np.ndarray:
    v, lengths = _sketches_to_tensors(sketches)
    with torch.no_grad():
        logits = clf(v, lengths)
    return logits.argmax(dim=-1).numpy()


def classifier_features(clf: ToyClassifier, sketches: list[ThreePointSketch]) -> np.ndarray:
    v, lengths = _sketches_to_tensors(sketches)
    with torch.no_grad():
        return clf.features(v, lengths).double().numpy()


def train_toy_classifier(
    dataset: DatasetSplit,
    epochs: int = 40,
    lr: float = 3e-3,
    batch_size: int = 64,
    seed: int = 0,
    min_accuracy: float = 0.95,
) -> ToyClassifier:
    """Train the harness classifier; errors out below `min_accuracy` on the
    test split because downstream metrics would be meaningless."""
    if dataset.train_labels is None:
        raise ContractError("toy classifier needs a labeled dataset")
    n_classes = int(dataset.train_labels.max()) + 1
    if n_classes < 2:
        raise ContractError("toy classifier needs >= 2 classes")
    torch.manual_seed(seed)
    clf = ToyClassifier(n_classes)
    seed_parameters(clf, seed)
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    v, lengths = _sketches_to_tensors(dataset.train)
    labels = torch.as_tensor(dataset.train_labels)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        perm = rng.permutation(len(labels))
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad(set_to_none=True)
            loss = nn.functional.cross_entropy(
                clf(v[idx], lengths[idx]), labels[idx]
            )
            loss.backward()
            opt.step()
    clf.eval()
    pred = classify(clf, dataset.test)
    acc = float(np.mean(pred == dataset.test_labels))
    if acc < min_accuracy:
        raise HarnessError(f"toy classifier test accuracy {acc:.3f} < {min_accuracy}")
    clf.test_accuracy = acc
    return clf


# ---------------------------------------------------------------------------
# Frechet feature distance
# ---------------------------------------------------------------------------


def _sqrtm_trace(c1: np.ndarray, c2: np.ndarray) -> float:
    """tr((c1 c2)^1/2) via eigendecomposition of the symmetrized product,
    clipping negative eigenvalues at 0."""
    w1, u1 = np.linalg.eigh(c1)
    w1 = np.clip(w1, 0.0, None)
    s1 = (u1 * np.sqrt(w1)) @ u1.T  # c1^(1/2)
    inner = s1 @ c2 @ s1
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())


def frechet_gaussian_distance(
    mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray
) -> float:
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * _sqrtm_trace(cov1, cov2))


def frechet_feature_distance(
    samples: list[ThreePointSketch],
    reference: list[ThreePointSketch],
    classifier: ToyClassifier,
    jitter: float = 1e-6,
) -> float:
    """Frechet distance between Gaussians fitted to penultimate features."""
    if len(samples) < 32 or len(reference) < 32:
        raise MetricError("need >= 32 items per side for a stable covariance")
    f1 = classifier_features(classifier, samples)
    f2 = classifier_features(classifier, reference)
    mu1, mu2 = f1.mean(axis=0), f2.mean(axis=0)
    cov1 = np.cov(f1, rowvar=False)
    cov2 = np.cov(f2, rowvar=False)
    for cov in (cov1, cov2):
        if np.linalg.matrix_rank(cov) < cov.shape[0]:
            cov += jitter * np.eye(cov.shape[0])
    return frechet_gaussian_distance(mu1, cov1, mu2, cov2)


# ---------------------------------------------------------------------------
# Class consistency of implicit conditioning
# ---------------------------------------------------------------------------


def class_consistency(
    ckpt: Checkpoint,
    classifier: ToyClassifier,
    test_set: list[ThreePointSketch],
    test_labels: np.ndarray,
    t_c: int,
    n_per_item: int = 4,
    seed: int = 0,
) -> float:
    """Fraction of implicit-conditioning samples classified as the
    condition's class."""
    rng = torch.Generator().manual_seed(seed)
    generated, targets = [], []
    for sk, label in zip(test_set, test_labels):
        for _ in range(n_per_item):
            out = implicit_condition(ckpt, ConditionSpec(step=t_c, condition=sk), rng)
            generated.append(out)
            targets.append(label)
    pred = classify(classifier, generated)
    return float(np.mean(pred == np.array(targets)))


# ---------------------------------------------------------------------------
# Abstraction energy
# ---------------------------------------------------------------------------


def abstraction_energy(samples: list[ThreePointSketch]) -> float:
    """Mean over samples of the mean squared second difference of positions
    (a high-frequency energy proxy)."""
    if not samples:
        raise MetricError("abstraction_energy needs a non-empty sample list")
    energies = []
    for sk in samples:
        d2 = np.diff(sk.xy, n=2, axis=0)
        energies.append(float(np.mean(np.sum(d2**2, axis=1))) if len(d2) else 0.0)
    return float(np.mean(energies))


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def unconditional_cd(
    ckpt: Checkpoint,
    test_set: list[ThreePointSketch],
    seed: int = 0,
    steps: int = 50,
    sampler: str = "ddim",
) -> float:
    """Mean CD between test sketches and unconditional samples of matching
    length (the reconstruction baseline); needs an unconditional checkpoint."""
    if ckpt.mode != "none":
        raise ContractError("unconditional_cd needs an unconditional checkpoint")
    rng = torch.Generator().manual_seed(seed)
    cds = []
    for sk in test_set:
        out = unconditional_sample(ckpt, len(sk), sampler, steps, rng=rng)
        cds.append(chamfer_distance(PointSet(sk.xy.copy()), PointSet(out.xy.copy())))
    return float(np.mean(cds))
