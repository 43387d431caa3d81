"""Stroke-sequence data types, ingestion, preprocessing and geometry utilities.

Sketches live in "three-point" form: an ordered sequence of (x, y, pen)
rows where pen = +1 marks the last point of a stroke and pen = -1 means the
pen stays down. Diffusion operates on the velocity form (per-step forward
differences) which round-trips exactly with the position form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ContractError,
    DataError,
    MetricError,
    ParseError,
    PreprocessingError,
)

PEN_DOWN = -1.0
PEN_UP = 1.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class ThreePointSketch:
    """Ordered (x, y, pen) points; pen in {-1, +1}, length >= 2."""

    points: np.ndarray  # (L, 3) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"expected (L, 3) points, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise DataError(f"sketch needs at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise DataError("sketch contains NaN/Inf values")
        if not np.all(np.isin(pts[:, 2], (-1.0, 1.0))):
            raise DataError("pen bits must be exactly -1 or +1")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def pen(self) -> np.ndarray:
        return self.points[:, 2]


@dataclass
class VelocitySequence:
    """Per-step (vx, vy, pen) elements plus the start position for decoding."""

    elements: np.ndarray  # (L, 3) float64
    origin: tuple[float, float]

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=np.float64)
        if el.ndim != 2 or el.shape[1] != 3:
            raise DataError(f"expected (L, 3) elements, got shape {el.shape}")
        if not np.all(np.isfinite(el)):
            raise DataError("velocity sequence contains NaN/Inf values")
        self.elements = el
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    def __len__(self) -> int:
        return self.elements.shape[0]


@dataclass
class PointSet:
    """Unordered collection of (x, y) points; equality ignores ordering."""

    points: np.ndarray  # (N, 2) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DataError(f"expected (N, 2) points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("point set contains NaN/Inf values")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def canonical(self) -> np.ndarray:
        """Lexicographically sorted copy, for order-insensitive comparison."""
        idx = np.lexsort((self.points[:, 1], self.points[:, 0]))
        return self.points[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointSet):
            return NotImplemented
        if len(self) != len(other):
            return False
        return bool(np.array_equal(self.canonical(), other.canonical()))


@dataclass
class SketchBatch:
    """Zero-padded velocity batch with a validity mask.

    Any consumer must be invariant to the values stored at masked-out
    positions; that invariance is tested, not assumed.
    """

    velocities: np.ndarray  # (B, L_max, 3) float32
    mask: np.ndarray  # (B, L_max) bool
    lengths: np.ndarray  # (B,) int64
    origins: np.ndarray  # (B, 2) float64

    def __len__(self) -> int:
        return self.velocities.shape[0]


@dataclass
class DatasetSplit:
    """Disjoint train/validation/test partitions with optional class labels."""

    train: list[ThreePointSketch]
    val: list[ThreePointSketch]
    test: list[ThreePointSketch]
    train_labels: np.ndarray | None = None
    val_labels: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------


def _normalize_pen(raw: np.ndarray, lineno: int) -> np.ndarray:
    allowed = np.isin(raw, (-1.0, 0.0, 1.0))
    if not np.all(allowed):
        bad = raw[~allowed][0]
        raise DataError(f"line {lineno}: pen value {bad!r} outside {{-1, 0, 1}}")
    # 0/1 encodings: 1 = pen lift; -1/+1 pass through unchanged.
    return np.where(raw <= 0.0, PEN_DOWN, PEN_UP)


def parse_sketch_file(path: str | Path, format: str = "stroke3-jsonl") -> list[ThreePointSketch]:
    """Read line-delimited JSON sketches.

    `format` is "stroke3-jsonl" (absolute coordinates) or "offsets-jsonl"
    (per-step offsets, cumulatively summed). An optional first-line JSON
    object header may declare {"absolute": bool} and overrides the flag.
    """
    if format not in ("stroke3-jsonl", "offsets-jsonl"):
        raise ParseError(f"unknown format {format!r}")
    absolute = format == "stroke3-jsonl"
    sketches: list[ThreePointSketch] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                raise ParseError(f"line {lineno}: empty line")
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if lineno == 1 and isinstance(payload, dict):
                if "absolute" in payload:
                    absolute = bool(payload["absolute"])
                continue
            if not isinstance(payload, list) or not payload:
                raise ParseError(f"line {lineno}: expected a non-empty JSON array")
            arr = np.asarray(payload, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ParseError(f"line {lineno}: expected [x, y, pen] triples")
            pen = _normalize_pen(arr[:, 2], lineno)
            xy = arr[:, :2] if absolute else np.cumsum(arr[:, :2], axis=0)
            sketches.append(ThreePointSketch(np.column_stack([xy, pen])))
    return sketches


def save_sketch_file(sketches: list[ThreePointSketch], path: str | Path) -> None:
    """Write sketches as stroke3-jsonl with a header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "stroke3-jsonl", "absolute": True}) + "\n")
        for sk in sketches:
            fh.write(json.dumps([[float(x), float(y), int(p)] for x, y, p in sk.points]) + "\n")


# ---------------------------------------------------------------------------
# Stroke resampling
# ---------------------------------------------------------------------------


def split_strokes(sketch: ThreePointSketch) -> list[np.ndarray]:
    """Split into per-stroke (n, 2) coordinate arrays at pen-up points."""
    ends = np.flatnonzero(sketch.pen == PEN_UP)
    if len(ends) == 0 or ends[-1] != len(sketch) - 1:
        ends = np.append(ends, len(sketch) - 1)
    strokes = []
    start = 0
    for end in ends:
        strokes.append(sketch.xy[start : end + 1])
        start = end + 1
    return [s for s in strokes if len(s) > 0]


def _arc_length(stroke: np.ndarray) -> float:
    if len(stroke) < 2:
        return 0.0
    return float(np.sqrt(((np.diff(stroke, axis=0)) ** 2).sum(axis=1)).sum())


def _resample_polyline(stroke: np.ndarray, n: int) -> np.ndarray:
    """Place n points at equal arc-length spacing along the polyline."""
    seg = np.sqrt((np.diff(stroke, axis=0) ** 2).sum(axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], n)
    return np.column_stack(
        [np.interp(targets, cum, stroke[:, 0]), np.interp(targets, cum, stroke[:, 1])]
    )


def allocate_points(arc_lengths: list[float], total: int, minimum: int = 2) -> list[int]:
    """Split `total` points across strokes proportionally to arc length.

    Minimizes sum_i (l_i / n_i - s)^2 where s is the ideal global spacing,
    subject to n_i >= minimum, via exact DP over strokes.
    """
    k = len(arc_lengths)
    if total < minimum * k:
        raise PreprocessingError(
            f"target length {total} too small for {k} strokes (minimum {minimum} each)"
        )
    s = sum(arc_lengths) / total

    def cost(i: int, n: int) -> float:
        return (arc_lengths[i] / n - s) ** 2

    # best[i][m] = minimal cost allocating m points to strokes i..k-1
    INF = float("inf")
    best = [[INF] * (total + 1) for _ in range(k + 1)]
    choice = [[0] * (total + 1) for _ in range(k)]
    best[k][0] = 0.0
    for i in range(k - 1, -1, -1):
        for m in range(minimum * (k - i), total + 1):
            for n in range(minimum, m - minimum * (k - i - 1) + 1):
                rest = best[i + 1][m - n]
                if rest == INF:
                    continue
                c = cost(i, n) + rest
                if c < best[i][m]:
                    best[i][m] = c
                    choice[i][m] = n
    out = []
    m = total
    for i in range(k):
        n = choice[i][m]
        out.append(n)
        m -= n
    return out


def resample_sketch(sketch: ThreePointSketch, target_len: int) -> ThreePointSketch:
    """Equispaced resampling to exactly `target_len` points, preserving
    stroke boundaries; no translation or scaling."""
    if target_len < 2:
        raise ContractError(f"target_len must be >= 2, got {target_len}")
    strokes = split_strokes(sketch)
    lengths = [_arc_length(s) for s in strokes]
    total_arc = sum(lengths)
    if total_arc <= 0.0:
        raise PreprocessingError("sketch has zero total arc length")
    # Degenerate (zero-length) strokes carry no geometry; drop them.
    keep = [i for i, l in enumerate(lengths) if l > 0.0]
    strokes = [strokes[i] for i in keep]
    lengths = [lengths[i] for i in keep]

    counts = allocate_points(lengths, target_len)
    pieces, pens = [], []
    for stroke, n in zip(strokes, counts):
        pts = _resample_polyline(stroke, n)
        pen = np.full(n, PEN_DOWN)
        pen[-1] = PEN_UP
        pieces.append(pts)
        pens.append(pen)
    xy = np.concatenate(pieces, axis=0)
    pen = np.concatenate(pens)
    return ThreePointSketch(np.column_stack([xy, pen]))


def preprocess(sketch: ThreePointSketch, target_len: int, scale_box: float) -> ThreePointSketch:
    """Equispaced resampling to exactly `target_len` points, then fit the
    bounding box into [0, scale_box]^2 by translation + isotropic scaling."""
    if scale_box <= 0:
        raise ContractError(f"scale_box must be > 0, got {scale_box}")
    resampled = resample_sketch(sketch, target_len)
    xy = resampled.xy
    pen = resampled.pen
    lo = xy.min(axis=0)
    side = float((xy.max(axis=0) - lo).max())
    xy = (xy - lo) * (scale_box / side)
    return ThreePointSketch(np.column_stack([xy, pen]))


# ---------------------------------------------------------------------------
# Representation conversions
# ---------------------------------------------------------------------------


def to_velocities(sketch: ThreePointSketch) -> VelocitySequence:
    """Forward differences; the last element gets velocity (0, 0)."""
    xy = sketch.xy
    v = np.zeros_like(xy)
    v[:-1] = xy[1:] - xy[:-1]
    return VelocitySequence(
        np.column_stack([v, sketch.pen]), origin=(float(xy[0, 0]), float(xy[0, 1]))
    )


def to_positions(velocities: VelocitySequence, origin: tuple[float, float] | None = None) -> ThreePointSketch:
    """Cumulative-sum inverse of :func:`to_velocities`."""
    if origin is None:
        origin = velocities.origin
    el = velocities.elements
    xy = np.empty((len(velocities), 2))
    xy[0] = origin
    if len(velocities) > 1:
        xy[1:] = origin + np.cumsum(el[:-1, :2], axis=0)
    return ThreePointSketch(np.column_stack([xy, el[:, 2]]))


def to_point_set(sketch: ThreePointSketch, densify: int) -> PointSet:
    """Coordinate set after equispaced densification; pen bits discarded."""
    if densify < len(sketch):
        raise ContractError(f"densify={densify} < sketch length {len(sketch)}")
    if densify == len(sketch):
        return PointSet(sketch.xy.copy())
    strokes = split_strokes(sketch)
    lengths = [_arc_length(s) for s in strokes]
    keep = [i for i, l in enumerate(lengths) if l > 0.0]
    if not keep:
        raise PreprocessingError("sketch has zero total arc length")
    strokes = [strokes[i] for i in keep]
    lengths = [lengths[i] for i in keep]
    counts = allocate_points(lengths, densify)
    pts = np.concatenate(
        [_resample_polyline(s, n) for s, n in zip(strokes, counts)], axis=0
    )
    return PointSet(pts)


def quantize_pen(p_raw: float) -> float:
    """Threshold an analog pen bit at 0; ties map to pen-up (+1)."""
    if np.isnan(p_raw):
        raise DataError("pen value is NaN")
    return PEN_UP if p_raw >= 0.0 else PEN_DOWN


def quantize_pen_array(p: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(p)):
        raise DataError("pen channel contains NaN")
    return np.where(p >= 0.0, PEN_UP, PEN_DOWN)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def chamfer_distance(a: PointSet, b: PointSet) -> float:
    """Symmetric sum of mean squared nearest-neighbor distances."""
    if len(a) == 0 or len(b) == 0:
        raise MetricError("chamfer distance requires non-empty point sets")
    # query for the NN index, then form the squared distance from the raw
    # coordinates so the result matches a brute-force double loop exactly
    idx_ab = cKDTree(b.points).query(a.points)[1]
    idx_ba = cKDTree(a.points).query(b.points)[1]
    d2_ab = ((a.points - b.points[idx_ab]) ** 2).sum(axis=1)
    d2_ba = ((b.points - a.points[idx_ba]) ** 2).sum(axis=1)
    return float(np.mean(d2_ab) + np.mean(d2_ba))


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def make_batch(sequences: list[VelocitySequence]) -> SketchBatch:
    if not sequences:
        raise ContractError("cannot batch an empty list")
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    l_max = int(lengths.max())
    vel = np.zeros((len(sequences), l_max, 3), dtype=np.float32)
    mask = np.zeros((len(sequences), l_max), dtype=bool)
    origins = np.zeros((len(sequences), 2), dtype=np.float64)
    for i, seq in enumerate(sequences):
        vel[i, : len(seq)] = seq.elements
        mask[i, : len(seq)] = True
        origins[i] = seq.origin
    return SketchBatch(vel, mask, lengths, origins)


# ---------------------------------------------------------------------------
# Toy dataset generator
# ---------------------------------------------------------------------------

TOY_SPECS = ("lines", "circles", "polygons", "zigzags", "two-class")


def _toy_circle(rng: np.random.Generator, n_pts: int) -> np.ndarray:
    # Arc of a circle; all points stay exactly on the circle so a
    # least-squares fit has zero residual when noise = 0.
    extent = rng.uniform(0.85, 1.0) * 2 * np.pi
    phase = rng.uniform(0, 2 * np.pi)
    direction = rng.choice((-1.0, 1.0))
    theta = phase + direction * np.linspace(0.0, extent, n_pts)
    r = rng.uniform(0.5, 1.5)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _toy_line(rng: np.random.Generator, n_pts: int) -> np.ndarray:
    p0 = rng.uniform(-1, 1, size=2)
    p1 = p0 + rng.uniform(0.5, 2.0) * _unit(rng)
    t = np.linspace(0.0, 1.0, n_pts)[:, None]
    return p0 + t * (p1 - p0)


def _unit(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(a), np.sin(a)])


def _toy_polygon(rng: np.random.Generator, n_pts: int) -> np.ndarray:
    m = int(rng.integers(3, 7))
    rot = rng.uniform(0, 2 * np.pi)
    theta = rot + np.linspace(0, 2 * np.pi, m + 1)
    verts = np.column_stack([np.cos(theta), np.sin(theta)])
    return _resample_polyline(verts, n_pts)


def _toy_zigzag(rng: np.random.Generator, n_pts: int) -> np.ndarray:
    k = int(rng.integers(4, 9))
    xs = np.linspace(0.0, 1.0, k + 1)
    amp = rng.uniform(0.2, 0.5)
    ys = amp * np.array([(-1.0) ** i for i in range(k + 1)])
    verts = np.column_stack([xs, ys])
    return _resample_polyline(verts, n_pts)


def generate_toy_dataset(
    spec: str, n: int, length: int, noise: float, seed: int
) -> DatasetSplit:
    """Deterministic synthetic sketches, preprocessed to `length` points in
    [0, 1]^2, split 80-10-10. `two-class` yields labeled circles (0) vs
    zigzags (1) with an exact 50/50 balance."""
    if spec not in TOY_SPECS:
        raise ContractError(f"unknown toy spec {spec!r}")
    if n < 10:
        raise ContractError(f"toy dataset needs n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    makers = {
        "lines": _toy_line,
        "circles": _toy_circle,
        "polygons": _toy_polygon,
        "zigzags": _toy_zigzag,
    }
    sketches: list[ThreePointSketch] = []
    labels: list[int] = []
    for i in range(n):
        if spec == "two-class":
            label = i % 2
            maker = _toy_circle if label == 0 else _toy_zigzag
        else:
            label = 0
            maker = makers[spec]
        xy = maker(rng, length)
        if noise > 0:
            xy = xy + rng.normal(0.0, noise, size=xy.shape)
        pen = np.full(length, PEN_DOWN)
        pen[-1] = PEN_UP
        raw = ThreePointSketch(np.column_stack([xy, pen]))
        sketches.append(preprocess(raw, target_len=length, scale_box=1.0))
        labels.append(label)

    labels_arr = np.array(labels, dtype=np.int64)
    perm = rng.permutation(n)
    n_train = round(0.8 * n)
    n_val = round(0.1 * n)
    idx_train = perm[:n_train]
    idx_val = perm[n_train : n_train + n_val]
    idx_test = perm[n_train + n_val :]
    labeled = spec == "two-class"
    return DatasetSplit(
        train=[sketches[i] for i in idx_train],
        val=[sketches[i] for i in idx_val],
        test=[sketches[i] for i in idx_test],
        train_labels=labels_arr[idx_train] if labeled else None,
        val_labels=labels_arr[idx_val] if labeled else None,
        test_labels=labels_arr[idx_test] if labeled else None,
        meta={
            "spec": spec,
            "n": n,
            "preprocess": {"target_len": length, "scale_box": 1.0},
            "noise": noise,
            "seed": seed,
        },
    )


def save_dataset(split: DatasetSplit, out_dir: str | Path) -> None:
    """Write split as three jsonl files plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        save_sketch_file(getattr(split, name), out / f"{name}.jsonl")
    manifest = {
        "splits": {name: len(getattr(split, name)) for name in ("train", "val", "test")},
        "labels": {
            name: getattr(split, f"{name}_labels").tolist()
            if getattr(split, f"{name}_labels") is not None
            else None
            for name in ("train", "val", "test")
        },
        "preprocess": split.meta.get("preprocess"),
        "seed": split.meta.get("seed"),
        "spec": split.meta.get("spec"),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(in_dir: str | Path) -> DatasetSplit:
    src = Path(in_dir)
    with open(src / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    parts = {name: parse_sketch_file(src / f"{name}.jsonl") for name in ("train", "val", "test")}
    labels = {
        name: np.array(manifest["labels"][name], dtype=np.int64)
        if manifest["labels"].get(name) is not None
        else None
        for name in ("train", "val", "test")
    }
    return DatasetSplit(
        train=parts["train"],
        val=parts["val"],
        test=parts["test"],
        train_labels=labels["train"],
        val_labels=labels["val"],
        test_labels=labels["test"],
        meta={"preprocess": manifest.get("preprocess"), "seed": manifest.get("seed"), "spec": manifest.get("spec")},
    )
