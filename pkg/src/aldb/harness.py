"""Experiment orchestration: sweeps, learning curves and relative efficiency."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .acquisition import AcquisitionSpec
from .core import AldbError, Dataset, ParameterSpace, Strategy, denormalize, make_rng
from .downstream import EvalReport, RegressorKind, evaluate, train
from .gpr import KernelParams
from .oracles import BraggConstants, make_oracle
from .samplers import BbdConfig, build_dataset, label

log = logging.getLogger(__name__)

STREAM_TEST = 3
STRATEGY_ORDER = (Strategy.UBD, Strategy.URBD, Strategy.BBD)
REGRESSOR_ORDER = (RegressorKind.KERNEL, RegressorKind.TREES)
# cross-database protocol: which database a model trained on key is tested on
CROSS_PARTNER = {Strategy.BBD: Strategy.URBD, Strategy.URBD: Strategy.BBD, Strategy.UBD: Strategy.BBD}

RESULT_COLUMNS = ["strategy", "regressor", "train_size", "seed",
                  "r2_mean", "r2_out1", "r2_out2", "r2_out3",
                  "mse_mean", "mse_out1", "mse_out2", "mse_out3"]


class ConfigError(AldbError, ValueError):
    pass


class MissingCells(AldbError, LookupError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    space: ParameterSpace
    oracle: str = "product-peak"
    strategies: tuple[Strategy, ...] = STRATEGY_ORDER
    sizes: tuple[int, ...] = (8, 16, 32, 64)
    regressors: tuple[RegressorKind, ...] = (RegressorKind.TREES,)
    seeds: tuple[int, ...] = (0,)
    resolution: int = 11
    acquisition: AcquisitionSpec = AcquisitionSpec()
    hyper_mode: str = "refit"
    kernel: KernelParams = KernelParams(0.3, 1.0, 1e-8)
    n_initial: int = 2
    test: str = "heldout"  # "heldout" or "cross"
    heldout_size: int = 500
    target: float = 0.97
    dimensions: tuple[int, ...] | None = None  # run once per leading-dims subspace
    sizes_by_dimension: dict[int, tuple[int, ...]] | None = None  # overrides sizes per dimension
    bragg: BraggConstants = BraggConstants()
    output_dir: Path = Path("results")

    def __post_init__(self):
        for name, conv in (("strategies", Strategy.parse), ("regressors", RegressorKind)):
            try:
                object.__setattr__(self, name, tuple(conv(v) for v in getattr(self, name)))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.dimensions is not None:
            object.__setattr__(self, "dimensions", tuple(int(d) for d in self.dimensions))
        if self.sizes_by_dimension is not None:
            object.__setattr__(self, "sizes_by_dimension",
                               {int(d): tuple(int(n) for n in ns) for d, ns in self.sizes_by_dimension.items()})
        self.validate()

    def validate(self):
        for sizes in [self.sizes, *(self.sizes_by_dimension or {}).values()]:
            if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
                raise ConfigError(f"sizes must be positive and strictly increasing, got {sizes}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be unsigned")
        if not 0 < self.target <= 1:
            raise ConfigError(f"target R^2 must lie in (0, 1], got {self.target}")
        if self.test not in ("heldout", "cross"):
            raise ConfigError(f"test protocol must be 'heldout' or 'cross', got {self.test!r}")
        if self.heldout_size < 2:
            raise ConfigError("held-out test set needs at least two points")
        if self.resolution < 2:
            raise ConfigError("mesh resolution must be >= 2")
        if self.hyper_mode not in ("refit", "fixed"):
            raise ConfigError(f"hyper_mode must be 'refit' or 'fixed', got {self.hyper_mode!r}")
        if self.dimensions is not None:
            if not self.dimensions or any(not 1 <= d <= self.space.d for d in self.dimensions):
                raise ConfigError(f"dimensions {self.dimensions} must lie in 1..{self.space.d}")
            if self.oracle == "bragg":
                raise ConfigError("the bragg oracle is fixed to six dimensions")

    def sizes_for(self, d: int) -> tuple[int, ...]:
        return (self.sizes_by_dimension or {}).get(d, self.sizes)

    def bbd_config(self, seed: int) -> BbdConfig:
        return BbdConfig(n_initial=self.n_initial, resolution=self.resolution, acquisition=self.acquisition,
                         hyper_mode=self.hyper_mode, kernel=self.kernel, seed=seed)

    def spaces(self) -> list[tuple[int | None, ParameterSpace]]:
        if self.dimensions is None:
            return [(None, self.space)]
        return [(d, self.space.subspace(d)) for d in self.dimensions]

    def to_dict(self) -> dict:
        return {
            "space": [[d.name, d.lower, d.upper] for d in self.space.dims],
            "oracle": self.oracle,
            "strategies": [s.value for s in self.strategies],
            "sizes": list(self.sizes),
            "regressors": [r.value for r in self.regressors],
            "seeds": list(self.seeds),
            "resolution": self.resolution,
            "acquisition": {"kappa": self.acquisition.kappa, "aggregation": self.acquisition.aggregation.value},
            "hyper_mode": self.hyper_mode,
            "kernel": dataclasses.asdict(self.kernel),
            "n_initial": self.n_initial,
            "test": self.test,
            "heldout_size": self.heldout_size,
            "target": self.target,
            "dimensions": None if self.dimensions is None else list(self.dimensions),
            "sizes_by_dimension": None if self.sizes_by_dimension is None else
            {str(d): list(ns) for d, ns in sorted(self.sizes_by_dimension.items())},
            "bragg": dataclasses.asdict(self.bragg),
            "output_dir": str(self.output_dir),
        }


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        space = data.pop("space", None)
        if space is None:
            dims = data.get("dimensions")
            if not dims:
                raise ConfigError("config needs 'space' (or 'dimensions' for a unit cube)")
            space = ParameterSpace.unit(max(dims))
        elif isinstance(space, dict) and "unit" in space:
            space = ParameterSpace.unit(int(space["unit"]))
        elif isinstance(space, dict):
            space = ParameterSpace.from_bounds(space)
        else:
            space = ParameterSpace.from_bounds([tuple(row) for row in space])
        kw: dict = {"space": space}
        if "acquisition" in data:
            kw["acquisition"] = AcquisitionSpec(**data.pop("acquisition"))
        if "kernel" in data:
            kw["kernel"] = KernelParams(**data.pop("kernel"))
        if "bragg" in data:
            kw["bragg"] = BraggConstants(**data.pop("bragg"))
        if "output_dir" in data:
            out = Path(data.pop("output_dir"))
            kw["output_dir"] = out if out.is_absolute() or base_dir is None else Path(os.path.normpath(base_dir / out))
        for key in ("strategies", "sizes", "regressors", "seeds", "dimensions"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        kw.update(data)
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(data, base_dir=path.parent)


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("ALDB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ALDB_THREADS must be an integer, got {env!r}") from None
    return default or os.cpu_count() or 1


# ---------------------------------------------------------------------------
# sweeps


def heldout_set(space: ParameterSpace, oracle, size: int, seed: int) -> Dataset:
    """Seeded uniform-random labeled test points."""
    U = make_rng(seed, STREAM_TEST).random((size, space.d))
    return label(space, denormalize(U, space), oracle, Strategy.URBD, seed)


class _Databases:
    """Per-seed database cache; BBD is grown once to the largest size and sliced."""

    def __init__(self, cfg: ExperimentConfig, space: ParameterSpace, oracle, seed: int):
        self.cfg, self.space, self.oracle, self.seed = cfg, space, oracle, seed
        self._bbd: Dataset | None = None
        self._cache: dict[tuple[Strategy, int], Dataset] = {}

    def get(self, strategy: Strategy, n: int) -> Dataset:
        if strategy is Strategy.BBD:
            if self._bbd is None:
                self._bbd = build_dataset(Strategy.BBD, self.space, max(self.cfg.sizes_for(self.space.d)), self.oracle,
                                          self.seed, self.cfg.bbd_config(self.seed))
            return self._bbd.prefix(min(n, len(self._bbd)))
        key = (strategy, n)
        if key not in self._cache:
            self._cache[key] = build_dataset(strategy, self.space, n, self.oracle, self.seed)
        return self._cache[key]


def _run_seed(cfg: ExperimentConfig, space: ParameterSpace, oracle, seed: int) -> list[EvalReport]:
    dbs = _Databases(cfg, space, oracle, seed)
    test = heldout_set(space, oracle, cfg.heldout_size, seed) if cfg.test == "heldout" else None
    reports = []
    for strategy in cfg.strategies:
        for n in cfg.sizes_for(space.d):
            ds = dbs.get(strategy, n)
            tst = test if test is not None else dbs.get(CROSS_PARTNER[strategy], n)
            for kind in cfg.regressors:
                try:
                    model = train(kind, ds)
                except AldbError as exc:
                    log.warning("skipping %s/%s N=%d seed=%d: %s", strategy.value, kind.value, n, seed, exc)
                    continue
                reports.append(evaluate(model, tst, train_size=n, strategy=strategy, seed=seed))
    return reports


def canonical_order(reports: Iterable[EvalReport]) -> list[EvalReport]:
    return sorted(reports, key=lambda r: (STRATEGY_ORDER.index(r.strategy), REGRESSOR_ORDER.index(r.regressor),
                                          r.train_size, r.seed))


@dataclass
class ExperimentResult:
    dimension: int | None
    reports: list[EvalReport]
    path: Path | None = None


def run_single(cfg: ExperimentConfig, space: ParameterSpace, workers: int = 1) -> list[EvalReport]:
    oracle = make_oracle(cfg.oracle, space, cfg.bragg)
    if workers > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _run_seed(cfg, space, oracle, s), cfg.seeds))
    else:
        parts = [_run_seed(cfg, space, oracle, s) for s in cfg.seeds]
    return canonical_order(r for part in parts for r in part)


def results_filename(dimension: int | None) -> str:
    return "results.csv" if dimension is None else f"results_d{dimension}.csv"


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, write: bool = True) -> list[ExperimentResult]:
    """Build, train and evaluate every (strategy, size, seed, regressor) cell.

    Writes one results CSV (plus JSON sidecar) per dimension to ``cfg.output_dir``.
    """
    workers = worker_count() if workers is None else workers
    out = []
    for d, space in cfg.spaces():
        reports = run_single(cfg, space, workers)
        res = ExperimentResult(d if d is not None else space.d, reports)
        if write:
            res.path = write_results(reports, cfg.output_dir / results_filename(d),
                                     meta={"dimension": space.d, "config": cfg.to_dict()})
        out.append(res)
    return out


def cached_results(cfg: ExperimentConfig) -> list[ExperimentResult] | None:
    """Results already on disk for this config (output location aside), else None."""
    want = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    found = []
    for d, space in cfg.spaces():
        path = cfg.output_dir / results_filename(d)
        meta = read_results_meta(path) if path.exists() else {}
        have = {k: v for k, v in meta.get("config", {}).items() if k != "output_dir"}
        if have != want:
            return None
        found.append(ExperimentResult(space.d, read_results(path), path))
    return found


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else format(float(v), ".17g")


def results_csv_text(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in reports:
        r2s = list(r.r2) + [math.nan] * (3 - len(r.r2))
        mses = list(r.mse) + [math.nan] * (3 - len(r.mse))
        w.writerow([r.strategy.value, r.regressor.value, r.train_size, r.seed, _num(r.r2_mean),
                    *map(_num, r2s[:3]), _num(r.mse_mean), *map(_num, mses[:3])])
    return buf.getvalue()


def write_results(reports: Sequence[EvalReport], path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(results_csv_text(reports), encoding="utf-8")
    if meta is not None:
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class ResultRow:
    strategy: Strategy
    regressor: RegressorKind
    train_size: int
    seed: int
    r2_mean: float
    r2: tuple[float, ...]
    mse_mean: float
    mse: tuple[float, ...]


def read_results(path) -> list[ResultRow]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                Strategy.parse(rec["strategy"]), RegressorKind(rec["regressor"]), int(rec["train_size"]),
                int(rec["seed"]), float(rec["r2_mean"]), tuple(float(rec[f"r2_out{j}"]) for j in (1, 2, 3)),
                float(rec["mse_mean"]), tuple(float(rec[f"mse_out{j}"]) for j in (1, 2, 3)),
            ))
    return rows


def read_results_meta(path) -> dict:
    side = Path(path).with_suffix(".json")
    return json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}


def as_rows(results) -> list[ResultRow]:
    out = []
    for r in results:
        if isinstance(r, ResultRow):
            out.append(r)
        else:
            out.append(ResultRow(r.strategy, r.regressor, r.train_size, r.seed, r.r2_mean, tuple(r.r2),
                                 r.mse_mean, tuple(r.mse)))
    return out


# ---------------------------------------------------------------------------
# curves and efficiency


@dataclass(frozen=True)
class Curve:
    strategy: Strategy
    regressor: RegressorKind
    metric: str
    sizes: tuple[int, ...]
    mean: tuple[float, ...]
    per_seed: dict[int, tuple[float, ...]] = field(default_factory=dict)

    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.sizes, self.mean))


def learning_curve(results, strategy, regressor, metric: str = "r2_mean") -> Curve:
    """Mean over seeds of ``metric`` at each training size."""
    strategy, regressor = Strategy.parse(strategy), RegressorKind(regressor)
    rows = [r for r in as_rows(results) if r.strategy is strategy and r.regressor is regressor]
    if not rows:
        raise MissingCells(f"no results for {strategy.value}/{regressor.value}")
    sizes = sorted({r.train_size for r in rows})
    seeds = sorted({r.seed for r in rows})
    table = {(r.train_size, r.seed): getattr(r, metric) for r in rows}
    missing = [(n, s) for n in sizes for s in seeds if (n, s) not in table]
    if missing:
        raise MissingCells(f"{strategy.value}/{regressor.value} missing (N, seed) cells {missing[:5]}")
    mean = tuple(float(np.mean([table[n, s] for s in seeds])) for n in sizes)
    per_seed = {s: tuple(table[n, s] for n in sizes) for s in seeds}
    return Curve(strategy, regressor, metric, tuple(sizes), mean, per_seed)


@dataclass(frozen=True)
class EfficiencyRatio:
    baseline: Strategy
    reached: bool               # both baseline and BBD reached the target
    value: float | None         # N_baseline / N_BBD when reached
    lower_bound: float | None   # max N / N_BBD when only BBD reached

    @property
    def status(self) -> str:
        if self.reached:
            return "reached"
        return "not reached" if self.lower_bound is not None else "undefined"


@dataclass(frozen=True)
class EfficiencyReport:
    dimension: int
    target: float
    n_to_target: dict[Strategy, int | None]
    max_n: dict[Strategy, int]
    ratios: dict[Strategy, EfficiencyRatio]


def n_to_target(curve: Curve, target: float) -> int | None:
    for n, v in zip(curve.sizes, curve.mean):
        if not math.isnan(v) and v >= target:
            return n
    return None


def relative_efficiency(curves: dict, target: float, dimension: int) -> EfficiencyReport:
    """Points a baseline needs to reach ``target`` divided by the points BBD needs."""
    curves = {Strategy.parse(k): v for k, v in curves.items()}
    missing = [s.value for s in STRATEGY_ORDER if s not in curves]
    if missing:
        raise MissingCells(f"efficiency needs curves for all strategies; missing {missing}")
    reached = {s: n_to_target(c, target) for s, c in curves.items()}
    max_n = {s: max(c.sizes) for s, c in curves.items()}
    n_bbd = reached[Strategy.BBD]
    ratios = {}
    for base in (Strategy.UBD, Strategy.URBD):
        n_base = reached[base]
        if n_bbd is None:
            ratios[base] = EfficiencyRatio(base, False, None, None)
        elif n_base is None:
            ratios[base] = EfficiencyRatio(base, False, None, max_n[base] / n_bbd)
        else:
            ratios[base] = EfficiencyRatio(base, True, n_base / n_bbd, None)
    return EfficiencyReport(dimension, target, reached, max_n, ratios)


def efficiency_from_results(results, target: float, dimension: int,
                            regressor: "RegressorKind | str" = RegressorKind.TREES) -> EfficiencyReport:
    curves = {s: learning_curve(results, s, regressor) for s in STRATEGY_ORDER}
    return relative_efficiency(curves, target, dimension)


EFFICIENCY_COLUMNS = ["dimension", "baseline", "n_baseline", "n_bbd", "ratio", "status", "lower_bound"]


def efficiency_csv_text(reports: Sequence[EfficiencyReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFICIENCY_COLUMNS)
    for rep in reports:
        for base, ratio in rep.ratios.items():
            nb, nbbd = rep.n_to_target[base], rep.n_to_target[Strategy.BBD]
            w.writerow([rep.dimension, base.value, "" if nb is None else nb, "" if nbbd is None else nbbd,
                        "" if ratio.value is None else _num(ratio.value), ratio.status,
                        "" if ratio.lower_bound is None else _num(ratio.lower_bound)])
    return buf.getvalue()


def write_efficiency(reports: Sequence[EfficiencyReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(efficiency_csv_text(reports), encoding="utf-8")
    return path
