"""Command-line entry point.

Every subcommand derives all randomness from --seed, writes its outputs
under --out, and drops a resolved-config snapshot next to them so the run
can be reproduced from that file alone. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import applications as apps
from .data import (
    generate_toy_dataset,
    load_dataset,
    parse_sketch_file,
    save_dataset,
    save_sketch_file,
    to_point_set,
    to_velocities,
)
from .errors import ConfigError, SketchDiffError
from .evaluation import (
    MetricReport,
    abstraction_energy,
    cd_vs_rate_curve,
    checkpoint_fingerprint,
    unconditional_cd,
)
from .networks import NoiseEstimatorConfig, SequenceEncoderConfig, SetEncoderConfig
from .render import curve_svg, sketch_grid_svg
from .training import TrainConfig, fit, load_checkpoint, save_checkpoint

DEFAULT_OUT_ENV = "SKETCHDIFF_OUT"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_snapshot(out: Path, subcommand: str, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"subcommand": subcommand, "resolved": resolved}
    _atomic_write(out / f"{subcommand}_config.json", json.dumps(payload, indent=2, sort_keys=True))


def _resolved(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_ckpt(args):
    return load_checkpoint(args.ckpt)


def _write_sketches(out: Path, stem: str, sketches: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_sketch_file(sketches, out / f"{stem}.jsonl")
    _atomic_write(out / f"{stem}.svg", sketch_grid_svg(sketches[:8]))


def _default_length(ckpt, explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    target = (ckpt.dataset_meta.get("preprocess") or {}).get("target_len")
    if not target:
        raise ConfigError("no --length given and the checkpoint records no target length")
    return int(target)


def _single_input(path: str):
    sketches = parse_sketch_file(path)
    if not sketches:
        raise ConfigError(f"no sketches in {path}")
    return sketches[0]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> None:
    split = generate_toy_dataset(args.spec, args.n, args.length, args.noise, args.seed)
    out = Path(args.out)
    save_dataset(split, out)
    _write_snapshot(out, "gen-data", _resolved(args))


def cmd_train(args) -> None:
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key in ("epochs", "batch_size", "mode", "T", "seed", "sigma_scale"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    est = NoiseEstimatorConfig(**overrides.pop("estimator", {}))
    seq = SequenceEncoderConfig(**overrides.pop("seq_encoder", {}))
    sets = SetEncoderConfig(**overrides.pop("set_encoder", {}))
    config = TrainConfig(estimator=est, seq_encoder=seq, set_encoder=sets, **overrides)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def log(record):
        print(
            f"epoch {record['epoch']:4d}  train {record['train_loss']:.4f}"
            + (f"  val {record['val_loss']:.4f}" if record["val_loss"] is not None else ""),
            file=sys.stderr,
        )

    final, best = fit(dataset, config, log=log)
    save_checkpoint(final, out / "model.ckpt")
    save_checkpoint(best, out / "best.ckpt")
    _atomic_write(out / "history.json", json.dumps(final.history, indent=2))
    _write_snapshot(out, "train", {**_resolved(args), "train_config": final.train_config})


def cmd_sample(args) -> None:
    ckpt = _load_ckpt(args)
    _, _, schedule = apps.materialize(ckpt)
    rng = torch.Generator().manual_seed(args.seed)
    out = Path(args.out)
    if args.condition is not None:
        cond = _single_input(args.condition)
        t_c = int(round(args.tc_frac * schedule.T))
        sketches = [
            apps.implicit_condition(ckpt, apps.ConditionSpec(step=t_c, condition=cond), rng)
            for _ in range(args.n)
        ]
    else:
        length = _default_length(ckpt, args.length)
        steps = schedule.T if args.sampler == "ddpm" else args.steps
        sketches = [
            apps.unconditional_sample(ckpt, length, args.sampler, steps, rng=rng)
            for _ in range(args.n)
        ]
    _write_sketches(out, "samples", sketches)
    _write_snapshot(out, "sample", _resolved(args))


def cmd_reconstruct(args) -> None:
    ckpt = _load_ckpt(args)
    sk = _single_input(args.input)
    rng = torch.Generator().manual_seed(args.seed)
    rec = apps.reconstruct(
        ckpt, to_velocities(sk), length_factor=args.length_factor, steps=args.steps, rng=rng
    )
    _write_sketches(Path(args.out), "reconstruction", [rec])
    _write_snapshot(Path(args.out), "reconstruct", _resolved(args))


def cmd_heal(args) -> None:
    ckpt = _load_ckpt(args)
    sk = _single_input(args.input)
    schedule = ckpt.schedule()
    t_h = int(round(args.th_frac * schedule.T))
    rng = torch.Generator().manual_seed(args.seed)
    healed = apps.heal(ckpt, sk, t_h, rng)
    _write_sketches(Path(args.out), "healed", [healed])
    _write_snapshot(Path(args.out), "heal", {**_resolved(args), "t_h": t_h})


def cmd_mix(args) -> None:
    ckpt = _load_ckpt(args)
    base = _single_input(args.base)
    reference = _single_input(args.reference)
    rng = torch.Generator().manual_seed(args.seed)
    if args.mode == "latent-ddim":
        mixed = apps.interpolate_latent(
            ckpt, to_velocities(base), to_velocities(reference), args.delta, steps=args.steps
        )
    else:
        mixed = apps.ilvr_mix(ckpt, base, reference, omega=args.omega, rng=rng)
    _write_sketches(Path(args.out), "mixed", [mixed])
    _write_snapshot(Path(args.out), "mix", _resolved(args))


def cmd_vectorize(args) -> None:
    ckpt = _load_ckpt(args)
    sk = _single_input(args.input)
    points = to_point_set(sk, max(len(sk), args.densify))
    rng = torch.Generator().manual_seed(args.seed)
    outs = apps.vectorize(ckpt, points, rng, n_samples=args.n, L=args.length)
    _write_sketches(Path(args.out), "vectorized", outs)
    _write_snapshot(Path(args.out), "vectorize", _resolved(args))


def cmd_abstract(args) -> None:
    ckpt = _load_ckpt(args)
    length = _default_length(ckpt, args.length)
    rng = torch.Generator().manual_seed(args.seed)
    outs = [apps.abstract_sample(ckpt, args.k, length, rng) for _ in range(args.n)]
    _write_sketches(Path(args.out), "abstracted", outs)
    _write_snapshot(Path(args.out), "abstract", _resolved(args))


def cmd_eval(args) -> None:
    ckpt = _load_ckpt(args)
    dataset = load_dataset(args.data)
    test = dataset.test[: args.limit] if args.limit else dataset.test
    report = MetricReport(seed=args.seed, checkpoint_fingerprint=checkpoint_fingerprint(ckpt))
    report.metrics["test_abstraction_energy"] = abstraction_energy(test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if ckpt.mode == "sequence-encoder":
        factors = [float(f) for f in args.factors.split(",")]
        curve = cd_vs_rate_curve(ckpt, test, factors, steps=args.steps, seed=args.seed)
        report.tables["cd_vs_rate"] = {str(k): v for k, v in curve.items()}
        _atomic_write(out / "cd_curve.svg", curve_svg(list(curve), list(curve.values())))
        with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["factor", "chamfer_distance"])
            for k, v in curve.items():
                writer.writerow([k, v])
    if ckpt.mode == "none":
        report.metrics["unconditional_cd"] = unconditional_cd(
            ckpt, test, seed=args.seed, steps=args.steps
        )
    _atomic_write(out / "report.json", report.to_json())
    _write_snapshot(out, "eval", _resolved(args))


def cmd_serve(args) -> None:
    import uvicorn

    from .service import build_app

    models = {}
    for spec in args.model:
        model_id, _, path = spec.partition("=")
        if not path:
            raise ConfigError(f"--model expects id=path, got {spec!r}")
        models[model_id] = path
    app = build_app(models)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchdiff")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    default_out = os.environ.get(DEFAULT_OUT_ENV, "out")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=default_out)

    p = sub.add_parser("gen-data", help="generate a deterministic toy dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--length", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.02)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a denoiser on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file with training-config fields")
    p.add_argument("--mode", choices=("none", "sequence-encoder", "set-encoder"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("-T", "--diffusion-steps", dest="T", type=int)
    p.add_argument("--sigma-scale", dest="sigma_scale", type=float)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=default_out)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw sketches from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--length", type=int)
    p.add_argument("--sampler", choices=("ddpm", "ddim"), default="ddim")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--condition", help="sketch file to condition on")
    p.add_argument("--tc-frac", dest="tc_frac", type=float, default=0.3)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="encode and re-decode a sketch")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--length-factor", dest="length_factor", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=50)
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("heal", help="denoise a corrupted sketch")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--th-frac", dest="th_frac", type=float, default=0.2)
    common(p)
    p.set_defaults(func=cmd_heal)

    p = sub.add_parser("mix", help="blend two sketches")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--mode", choices=("latent-ddim", "ilvr"), default="latent-ddim")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--omega", type=int, default=7)
    p.add_argument("--steps", type=int, default=50)
    common(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("vectorize", help="order an unordered point set into strokes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--length", type=int)
    p.add_argument("--densify", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("abstract", help="sample at reduced reverse-step variance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--length", type=int)
    common(p)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("eval", help="metric report for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--factors", default="1.0,2.0,4.0")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--limit", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--model", action="append", default=[], help="id=checkpoint-path")
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    torch.manual_seed(getattr(args, "seed", 0) or 0)
    np.random.seed((getattr(args, "seed", 0) or 0) % 2**32)
    try:
        args.func(args)
    except SketchDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(run())
