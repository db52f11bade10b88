"""Database builders: uniform (UBD), uniform + random (URBD), Bayesian (BBD)."""

from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionSpec, MeshExhausted, build_mesh, select_next
from .core import Dataset, ParameterSpace, Strategy, denormalize, duplicate_keys, make_rng, normalize
from .gpr import DEFAULT_JITTER, GprModel, HyperSearchSpec, KernelParams, fit, fit_optimized
from .oracles import OracleError

log = logging.getLogger(__name__)

# substream keys for make_rng
STREAM_URBD = 1
STREAM_BBD_INIT = 2


def int_root(N: int, d: int) -> int:
    """Largest n with n**d <= N."""
    n = max(1, int(round(N ** (1.0 / d))))
    while n ** d > N:
        n -= 1
    while (n + 1) ** d <= N:
        n += 1
    return n


def grid_levels(k: int) -> np.ndarray:
    """``k`` equally spaced unit levels including both ends; the midpoint for k = 1."""
    if k == 1:
        return np.array([0.5])
    return np.arange(k) / (k - 1)


def product_grid(counts: Sequence[int]) -> np.ndarray:
    """Unit-cube Cartesian grid, lexicographic order with the last dim fastest."""
    return np.array(list(itertools.product(*(grid_levels(k) for k in counts))), dtype=float)


@dataclass(frozen=True)
class UbdPlan:
    n: int
    upgraded: int  # number of dims carrying n + 1 levels in the base grid
    residual: int  # points taken from the next rung of the ladder
    upgrade_order: tuple[int, ...]

    def counts(self, upgraded: int | None = None) -> list[int]:
        k = self.upgraded if upgraded is None else upgraded
        out = [self.n] * len(self.upgrade_order)
        for dim in self.upgrade_order[:k]:
            out[dim] = self.n + 1
        return out


def plan_ubd(d: int, N: int, upgrade_order: Sequence[int] | None = None) -> UbdPlan:
    if N < 1:
        raise ValueError("need N >= 1")
    order = tuple(range(d)) if upgrade_order is None else tuple(upgrade_order)
    if sorted(order) != list(range(d)):
        raise ValueError(f"upgrade order {order} is not a permutation of {d} dims")
    n = int_root(N, d)
    k = max(j for j in range(d + 1) if n ** (d - j) * (n + 1) ** j <= N)
    return UbdPlan(n, k, N - n ** (d - k) * (n + 1) ** k, order)


def build_ubd_unit(d: int, N: int, upgrade_order: Sequence[int] | None = None) -> np.ndarray:
    plan = plan_ubd(d, N, upgrade_order)
    base = product_grid(plan.counts())
    if plan.residual == 0:
        return base
    nxt = product_grid(plan.counts(plan.upgraded + 1))
    taken = set(duplicate_keys(base))
    diff = nxt[[key not in taken for key in duplicate_keys(nxt)]]
    picks = [(i * len(diff)) // plan.residual for i in range(plan.residual)]
    return np.vstack([base, diff[picks]])


def build_ubd_inputs(space: ParameterSpace, N: int, upgrade_order: Sequence[int] | None = None) -> np.ndarray:
    """Exactly ``N`` distinct grid-based points, shape (N, d), physical units.

    Full ``n**d`` grids for evenly divisible ``N``; otherwise dims are upgraded
    to ``n + 1`` levels one at a time and the remainder is filled by an even
    stride through the points the next upgrade would add.
    """
    return denormalize(build_ubd_unit(space.d, N, upgrade_order), space)


def build_urbd_inputs(space: ParameterSpace, N: int, seed: int) -> np.ndarray:
    """``n**d`` uniform grid plus ``N - n**d`` seeded uniform-random extras."""
    n = int_root(N, space.d)
    base = product_grid([n] * space.d)
    seen = set(duplicate_keys(base))
    rng = make_rng(seed, STREAM_URBD)
    extras = []
    while len(extras) < N - len(base):
        u = rng.random(space.d)
        key = duplicate_keys(u)[0]
        if key not in seen:
            seen.add(key)
            extras.append(u)
    unit = np.vstack([base, np.array(extras).reshape(-1, space.d)])
    return denormalize(unit, space)


def label(space: ParameterSpace, inputs: np.ndarray, oracle: Callable, strategy: Strategy,
          seed: int = 0) -> Dataset:
    """Evaluate ``oracle`` on every input; failures are recorded, not raised."""
    X, Y, failed = [], [], []
    for x in inputs:
        try:
            y = np.asarray(oracle(x), dtype=float)
        except OracleError as exc:
            log.warning("oracle failed at %s: %s", x, exc)
            failed.append(x)
            continue
        X.append(x)
        Y.append(y)
    m = getattr(oracle, "m", len(Y[0]) if Y else 3)
    return Dataset(space, np.array(X).reshape(-1, space.d), np.array(Y).reshape(-1, m), strategy, seed,
                   failed=np.array(failed).reshape(-1, space.d))


@dataclass(frozen=True)
class BbdConfig:
    n_initial: int = 2
    resolution: int = 11
    acquisition: AcquisitionSpec = AcquisitionSpec()
    hyper_mode: str = "refit"  # or "fixed"
    kernel: KernelParams = KernelParams(0.3, 1.0, 1e-8)  # used in fixed mode and while n < 2
    search: HyperSearchSpec = field(default_factory=HyperSearchSpec)
    jitter: float = DEFAULT_JITTER
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_initial < 1:
            raise ValueError("need at least one initial point")
        if self.resolution < 2:
            raise ValueError("mesh resolution must be >= 2")
        if self.hyper_mode not in ("refit", "fixed"):
            raise ValueError(f"hyper_mode must be 'refit' or 'fixed', got {self.hyper_mode!r}")


def fit_surrogate(U: np.ndarray, Y: np.ndarray, cfg: BbdConfig) -> GprModel:
    if cfg.hyper_mode == "fixed" or len(U) < 2:
        return fit(U, Y, cfg.kernel, jitter=cfg.jitter)
    return fit_optimized(U, Y, cfg.search, jitter=cfg.jitter)


@dataclass
class BbdStep:
    """One acquisition: the model it was chosen with and the resulting point."""

    model: GprModel
    x: np.ndarray
    y: np.ndarray
    score: float
    mesh_index: int


def iter_bbd(space: ParameterSpace, N: int, oracle: Callable, cfg: BbdConfig = BbdConfig(),
             on_step: Callable[[BbdStep], None] | None = None) -> Dataset:
    """Run the Bayesian loop to ``N`` samples, reporting each acquisition to ``on_step``."""
    mesh = build_mesh(space, cfg.resolution)
    if N > cfg.n_initial + mesh.size:
        raise MeshExhausted(f"N = {N} exceeds {cfg.n_initial} initial + {mesh.size} mesh points")

    rng = make_rng(cfg.seed, STREAM_BBD_INIT)
    X: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    failed: list[np.ndarray] = []
    keys: set[tuple] = set()

    def attempt(x) -> bool:
        try:
            y = np.asarray(oracle(x), dtype=float)
        except OracleError as exc:
            log.warning("oracle failed at %s: %s", x, exc)
            failed.append(x)
            return False
        X.append(x)
        Y.append(y)
        keys.add(duplicate_keys(normalize(x, space))[0])
        return True

    # random seed points anywhere in the space
    n0 = min(cfg.n_initial, N)
    while len(X) < n0:
        u = rng.random(space.d)
        if duplicate_keys(u)[0] in keys:
            continue
        attempt(denormalize(u, space))

    # fit, score the unexplored mesh, label the best candidate, repeat
    while len(X) < N:
        model = fit_surrogate(normalize(np.array(X), space), np.array(Y), cfg)
        while True:
            x, score, index = select_next(model, mesh, cfg.acquisition, exclude=keys, workers=cfg.workers)
            if attempt(x):
                break
        if on_step is not None:
            on_step(BbdStep(model, x, Y[-1], score, index))
        log.debug("BBD %d/%d: mesh %d score %.6g", len(X), N, index, score)

    m = getattr(oracle, "m", len(Y[0]))
    return Dataset(space, np.array(X).reshape(-1, space.d), np.array(Y).reshape(-1, m), Strategy.BBD,
                   cfg.seed, n0, np.array(failed).reshape(-1, space.d))


def build_bbd(space: ParameterSpace, N: int, oracle: Callable, cfg: BbdConfig = BbdConfig()) -> Dataset:
    """Bayesian database: random seed points, then repeated max-uncertainty acquisition."""
    return iter_bbd(space, N, oracle, cfg)


def build_dataset(strategy: "Strategy | str", space: ParameterSpace, N: int, oracle: Callable,
                  seed: int = 0, bbd: BbdConfig | None = None) -> Dataset:
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.UBD:
        return label(space, build_ubd_inputs(space, N), oracle, strategy, seed)
    if strategy is Strategy.URBD:
        return label(space, build_urbd_inputs(space, N, seed), oracle, strategy, seed)
    cfg = BbdConfig(seed=seed) if bbd is None else bbd
    if cfg.seed != seed:
        cfg = dataclasses.replace(cfg, seed=seed)
    return build_bbd(space, N, oracle, cfg)

