"""Parameter spaces, datasets, normalization and seeded randomness."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

OUTPUT_NAMES = ("amplitude", "bandwidth", "frequency")
RNG_ALGORITHM = "PCG64"
DUPLICATE_DECIMALS = 12


class AldbError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AldbError, ValueError):
    pass


class OutOfRange(AldbError, ValueError):
    pass


class Strategy(str, enum.Enum):
    UBD = "UBD"
    URBD = "URBD"
    BBD = "BBD"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class ParameterDim:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("dimension name must be nonempty")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"{self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: need lower < upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ParameterSpace:
    dims: tuple[ParameterDim, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if len(self.dims) < 1:
            raise ValueError("a parameter space needs at least one dimension")
        names = [dim.name for dim in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")

    @classmethod
    def from_bounds(cls, bounds: "dict[str, Sequence[float]] | Sequence[tuple[str, float, float]]") -> "ParameterSpace":
        if isinstance(bounds, dict):
            items = [(name, lo_hi[0], lo_hi[1]) for name, lo_hi in bounds.items()]
        else:
            items = list(bounds)
        return cls(tuple(ParameterDim(str(n), float(lo), float(hi)) for n, lo, hi in items))

    @classmethod
    def unit(cls, d: int) -> "ParameterSpace":
        return cls(tuple(ParameterDim(f"u{i}", 0.0, 1.0) for i in range(d)))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [dim.name for dim in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([dim.lower for dim in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([dim.upper for dim in self.dims])

    def subspace(self, d: int) -> "ParameterSpace":
        """The space spanned by the first ``d`` dimensions."""
        if not 1 <= d <= self.d:
            raise DimensionMismatch(f"cannot take {d} of {self.d} dimensions")
        return ParameterSpace(self.dims[:d])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            return False
        return bool(np.all((x >= self.lower) & (x <= self.upper)))

    def to_dict(self) -> dict:
        return {"dims": [{"name": d.name, "lower": d.lower, "upper": d.upper} for d in self.dims]}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSpace":
        return cls(tuple(ParameterDim(str(d["name"]), float(d["lower"]), float(d["upper"])) for d in data["dims"]))


def _check_width(x: np.ndarray, d: int):
    if x.ndim == 0 or x.shape[-1] != d:
        raise DimensionMismatch(f"expected trailing dimension {d}, got shape {x.shape}")


def normalize(x, space: ParameterSpace) -> np.ndarray:
    """Map physical coordinates affinely onto the unit cube.

    Works on a single point or on an ``(n, d)`` array of points.
    """
    x = np.asarray(x, dtype=float)
    _check_width(x, space.d)
    lo, hi = space.lower, space.upper
    if not np.all(np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
        raise OutOfRange(f"point(s) outside {list(zip(lo, hi))}")
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def denormalize(u, space: ParameterSpace) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    _check_width(u, space.d)
    if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise OutOfRange("unit-cube coordinates must lie in [0, 1]")
    lo, hi = space.lower, space.upper
    # convex-combination form hits both endpoints exactly
    return np.clip(lo * (1.0 - u) + hi * u, lo, hi)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded PCG64 generator; ``stream`` keys give independent substreams."""
    if seed < 0:
        raise ValueError("seed must be unsigned")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def duplicate_keys(u: np.ndarray) -> list[tuple]:
    """Hashable keys for duplicate detection on normalized coordinates."""
    rounded = np.round(np.asarray(u, dtype=float), DUPLICATE_DECIMALS) + 0.0  # folds -0.0
    return [tuple(row) for row in rounded.reshape(-1, rounded.shape[-1])]


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Labeled samples in construction order.

    ``X`` holds physical inputs (n, d) and ``Y`` outputs (n, m). For BBD the row
    order is the acquisition order and the first ``n_initial`` rows are the
    random seed points. ``failed`` lists inputs whose oracle evaluation failed.
    """

    space: ParameterSpace
    X: np.ndarray
    Y: np.ndarray
    strategy: Strategy
    seed: int = 0
    n_initial: int = 0
    failed: np.ndarray = field(default=None)
    output_names: tuple[str, ...] = OUTPUT_NAMES

    def __post_init__(self):
        X = np.array(self.X, dtype=float).reshape(-1, self.space.d)
        Y = np.array(self.Y, dtype=float)
        Y = Y.reshape(len(X), -1) if Y.size or len(X) else Y.reshape(0, len(self.output_names))
        if len(X) != len(Y):
            raise DimensionMismatch(f"{len(X)} inputs but {len(Y)} outputs")
        failed = np.zeros((0, self.space.d)) if self.failed is None else np.array(self.failed, dtype=float).reshape(-1, self.space.d)
        for arr in (X, Y, failed):
            arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "failed", failed)
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        names = tuple(self.output_names)
        if Y.shape[1] != len(names):
            names = tuple(f"out{j + 1}" for j in range(Y.shape[1]))
        object.__setattr__(self, "output_names", names)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def samples(self) -> list[LabeledSample]:
        return [LabeledSample(x, y) for x, y in zip(self.X, self.Y)]

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def prefix(self, n: int) -> "Dataset":
        """First ``n`` samples; for BBD this is the database after ``n`` acquisitions."""
        if not 0 <= n <= len(self):
            raise ValueError(f"prefix {n} of a {len(self)}-sample dataset")
        return Dataset(self.space, self.X[:n], self.Y[:n], self.strategy, self.seed,
                       min(self.n_initial, n), self.failed, self.output_names)

    def unit_inputs(self) -> np.ndarray:
        return normalize(self.X, self.space) if len(self) else np.zeros((0, self.space.d))


@dataclass(frozen=True)
class Violation:
    kind: str  # DuplicateInput | OutOfRange | NonFinite | DimensionMismatch
    index: int
    detail: str = ""


def validate_dataset(ds: Dataset) -> list[Violation]:
    """All invariant violations in ``ds``; an empty list means the dataset is ok."""
    out: list[Violation] = []
    lo, hi = ds.space.lower, ds.space.upper
    seen: dict[tuple, int] = {}
    for i, (x, y) in enumerate(zip(ds.X, ds.Y)):
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            out.append(Violation("NonFinite", i))
            continue
        if np.any(x < lo) or np.any(x > hi):
            out.append(Violation("OutOfRange", i))
            continue
        key = duplicate_keys((x - lo) / (hi - lo))[0]
        if key in seen:
            out.append(Violation("DuplicateInput", i, f"same input as sample {seen[key]}"))
        else:
            seen[key] = i
    return out


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dataset_header(ds: Dataset) -> list[str]:
    return [f"x_{n}" for n in ds.space.names] + [f"y_{n}" for n in ds.output_names]


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``path`` (CSV) plus a JSON metadata sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_header(ds))
        for x, y in zip(ds.X, ds.Y):
            writer.writerow([_fmt(v) for v in x] + [_fmt(v) for v in y])
    meta = {
        "space": ds.space.to_dict(),
        "strategy": ds.strategy.value,
        "seed": ds.seed,
        "n_samples": len(ds),
        "n_initial": ds.n_initial,
        "creation_order": "acquisition" if ds.strategy is Strategy.BBD else "construction",
        "output_names": list(ds.output_names),
        "failed": [[_fmt(v) for v in x] for x in ds.failed],
        "rng": RNG_ALGORITHM,
    }
    metadata_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return path


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".json")


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(metadata_path(path).read_text(encoding="utf-8"))
    space = ParameterSpace.from_dict(meta["space"])
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    expected = [f"x_{n}" for n in space.names]
    if header[: space.d] != expected:
        raise DimensionMismatch(f"CSV header {header[:space.d]} does not match space {expected}")
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    failed = np.array([[float(v) for v in x] for x in meta.get("failed", [])]).reshape(-1, space.d)
    return Dataset(space, data[:, : space.d], data[:, space.d:], meta["strategy"], int(meta["seed"]),
                   int(meta.get("n_initial", 0)), failed,
                   tuple(h[2:] for h in header[space.d:]))
