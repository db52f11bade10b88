"""Downstream regressors trained on the constructed databases, and their metrics.

``kernel`` is an RBF kernel ridge model standing in for SVR; ``trees`` is
gradient-boosted regression trees standing in for XGBoost. Hyperparameters are
fixed per experiment.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.ensemble import GradientBoostingRegressor

from .core import AldbError, Dataset, DimensionMismatch, Strategy, duplicate_keys, normalize
from .gpr import kernel_matrix, KernelParams, sq_dist, standardize

log = logging.getLogger(__name__)


class TooFewSamples(AldbError, ValueError):
    pass


class DegenerateTruth(AldbError, ValueError):
    pass


class RegressorKind(str, enum.Enum):
    KERNEL = "kernel"
    TREES = "trees"


@dataclass(frozen=True)
class KernelShallowParams:
    ridge: float = 1e-3
    length_scale: float | None = None  # None: median pairwise distance of the training inputs


@dataclass(frozen=True)
class BoostedTreesParams:
    n_estimators: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    random_state: int = 0


def median_distance(U: np.ndarray) -> float:
    D = np.sqrt(sq_dist(U, U))
    off = D[np.triu_indices(len(U), k=1)]
    off = off[off > 0]
    return float(np.median(off)) if off.size else 1.0


class _KernelRidge:
    def __init__(self, U: np.ndarray, y: np.ndarray, params: KernelShallowParams):
        self.U = U
        self.ell = params.length_scale or median_distance(U)
        K = kernel_matrix(U, U, KernelParams(self.ell))
        K[np.diag_indices_from(K)] += params.ridge
        try:
            self.coef = linalg.cho_solve(linalg.cho_factor(K, lower=True), y)
        except linalg.LinAlgError:
            self.coef = np.linalg.lstsq(K, y, rcond=None)[0]

    def predict(self, U: np.ndarray) -> np.ndarray:
        return kernel_matrix(U, self.U, KernelParams(self.ell)) @ self.coef


class _Trees:
    def __init__(self, U: np.ndarray, y: np.ndarray, params: BoostedTreesParams):
        # fixed random_state pins the feature visiting order, hence tie-breaks
        self.model = GradientBoostingRegressor(
            loss="squared_error", n_estimators=params.n_estimators, max_depth=params.max_depth,
            learning_rate=params.learning_rate, random_state=params.random_state,
        ).fit(U, y)

    def predict(self, U: np.ndarray) -> np.ndarray:
        return self.model.predict(U)


@dataclass
class TrainedRegressor:
    kind: RegressorKind
    space: object
    models: list  # one per output, None for a constant channel
    means: np.ndarray
    scales: np.ndarray
    train_keys: frozenset = field(default_factory=frozenset, repr=False)

    @property
    def m(self) -> int:
        return len(self.models)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def train(kind: "RegressorKind | str", ds: Dataset, kernel: KernelShallowParams = KernelShallowParams(),
          trees: BoostedTreesParams = BoostedTreesParams()) -> TrainedRegressor:
    """Fit one independent model per output channel of ``ds``."""
    kind = RegressorKind(kind)
    n = len(ds)
    if n < 1 or (kind is RegressorKind.TREES and n < 5):
        raise TooFewSamples(f"{kind.value} regressor cannot be trained on {n} samples")
    U = normalize(ds.X, ds.space)
    models, means, scales = [], [], []
    for j in range(ds.m):
        y, mean, scale, constant = standardize(ds.Y[:, j])
        if constant:
            models.append(None)
        elif kind is RegressorKind.KERNEL:
            models.append(_KernelRidge(U, y, kernel))
        else:
            models.append(_Trees(U, y, trees))
        means.append(mean)
        scales.append(scale)
    return TrainedRegressor(kind, ds.space, models, np.array(means), np.array(scales),
                            frozenset(duplicate_keys(U)))


def predict(model: TrainedRegressor, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((0, model.m))
    X = np.atleast_2d(X)
    if X.shape[1] != model.space.d:
        raise DimensionMismatch(f"query has {X.shape[1]} columns, model expects {model.space.d}")
    U = normalize(X, model.space)
    out = np.empty((len(U), model.m))
    for j, sub in enumerate(model.models):
        z = np.zeros(len(U)) if sub is None else sub.predict(U)
        out[:, j] = model.means[j] + model.scales[j] * z
    return out


def r2(y_true, y_pred) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size < 2:
        raise ValueError("r2 needs at least two values")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateTruth("all true values are identical")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size < 1:
        raise ValueError("mse needs at least one value")
    return float(np.mean((y_true - y_pred) ** 2))


@dataclass(frozen=True)
class EvalReport:
    r2: tuple[float, ...]       # per output, NaN for degenerate channels
    r2_mean: float              # over non-degenerate channels
    mse: tuple[float, ...]      # per output, raw units
    mse_mean: float
    train_size: int
    test_size: int
    strategy: Strategy
    seed: int
    regressor: RegressorKind
    degenerate: tuple[int, ...] = ()


def evaluate(model: TrainedRegressor, test: Dataset, train_size: int | None = None,
             strategy: "Strategy | str | None" = None, seed: int | None = None) -> EvalReport:
    """Score ``model`` on ``test``: per-output and mean R^2 and MSE."""
    if len(test) == 0:
        raise ValueError("empty test set")
    overlap = sum(k in model.train_keys for k in duplicate_keys(normalize(test.X, test.space)))
    if overlap:
        log.warning("%d test inputs also appear in the training set", overlap)
    pred = predict(model, test.X)
    r2s, mses, bad = [], [], []
    for j in range(model.m):
        t, p = test.Y[:, j], pred[:, j]
        mses.append(mse(t, p))
        _, mean, scale, constant = standardize(t)
        try:
            if constant:
                raise DegenerateTruth("constant channel")
            r2s.append(r2((t - mean) / scale, (p - mean) / scale))
        except DegenerateTruth:
            r2s.append(math.nan)
            bad.append(j)
    good = [v for v in r2s if not math.isnan(v)]
    return EvalReport(
        r2=tuple(r2s), r2_mean=float(np.mean(good)) if good else math.nan,
        mse=tuple(mses), mse_mean=float(np.mean(mses)),
        train_size=len(model.train_keys) if train_size is None else train_size,
        test_size=len(test),
        strategy=Strategy.parse(strategy if strategy is not None else test.strategy),
        seed=test.seed if seed is None else seed,
        regressor=model.kind, degenerate=tuple(bad),
    )
