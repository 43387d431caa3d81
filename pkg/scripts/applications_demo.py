#!/usr/bin/env python3
"""Gallery of the downstream procedures on a freshly trained toy model.

Trains three small checkpoints (unconditional, sequence-encoder,
set-encoder) on the two-class toy set, then renders one SVG per procedure
under --out: healing a corrupted sketch, implicit conditioning, latent
interpolation, low-pass mixing, abstraction sweep, and vectorization.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import torch

from sketchdiff import applications as apps
from sketchdiff.data import generate_toy_dataset, to_point_set, to_velocities
from sketchdiff.networks import NoiseEstimatorConfig
from sketchdiff.render import sketch_grid_svg
from sketchdiff.training import TrainConfig, fit


def train(dataset, mode: str, epochs: int):
    config = TrainConfig(
        mode=mode,
        epochs=epochs,
        batch_size=64,
        T=100,
        seed=0,
        estimator=NoiseEstimatorConfig(layers=2, hidden=48, time_dim=16),
    )
    _, best = fit(dataset, config)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dataset = generate_toy_dataset("two-class", 500, 32, 0.02, seed=0)
    print("training unconditional model ...")
    uncond = train(dataset, "none", args.epochs)
    print("training sequence-encoder model ...")
    seq = train(dataset, "sequence-encoder", args.epochs)
    print("training set-encoder model ...")
    sets = train(dataset, "set-encoder", args.epochs)

    rng = torch.Generator().manual_seed(0)
    a, b = dataset.test[0], dataset.test[1]

    # healing: corrupt with coordinate noise, then denoise from t_h = T/5
    noisy_xy = a.xy + np.random.default_rng(0).normal(0.0, 0.05, a.xy.shape)
    corrupted = type(a)(np.column_stack([noisy_xy, a.points[:, 2]]))
    healed = apps.heal(uncond, corrupted, t_h=20, rng=rng)
    (out / "heal.svg").write_text(sketch_grid_svg([a, corrupted, healed]))

    # implicit conditioning at T/5 keeps identity, at T forgets it
    rows = [a]
    for t_c in (20, 100):
        spec = apps.ConditionSpec(step=t_c, condition=a)
        rows.append(apps.implicit_condition(uncond, spec, rng))
    (out / "implicit.svg").write_text(sketch_grid_svg(rows))

    # latent interpolation sweep between two test sketches
    va, vb = to_velocities(a), to_velocities(b)
    sweep = [
        apps.interpolate_latent(seq, va, vb, delta)
        for delta in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]
    (out / "interpolate.svg").write_text(sketch_grid_svg(sweep))

    # low-pass creative mixing
    mixed = apps.ilvr_mix(seq, a, b, omega=7, rng=rng)
    (out / "mix.svg").write_text(sketch_grid_svg([a, b, mixed]))

    # abstraction: k=0 smooth mean path vs k=1 full-variance sample
    abstracted = [
        apps.abstract_sample(uncond, k, 32, torch.Generator().manual_seed(3))
        for k in (0.0, 0.5, 1.0)
    ]
    (out / "abstract.svg").write_text(sketch_grid_svg(abstracted))

    # vectorization: three orderings of the same point set
    points = to_point_set(a, len(a))
    vectors = apps.vectorize(sets, points, torch.Generator().manual_seed(4), n_samples=3)
    (out / "vectorize.svg").write_text(sketch_grid_svg([a, *vectors]))

    print(f"wrote galleries under {out}")


if __name__ == "__main__":
    main()
