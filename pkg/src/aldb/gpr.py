"""Exact GP regression: zero prior mean, isotropic RBF kernel, one GP per output.

Inputs are expected on the unit cube (see :func:`aldb.core.normalize`).
Targets are standardized per output before fitting, so the zero prior mean
corresponds to the training-target mean in raw units.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .core import AldbError, DimensionMismatch

DEFAULT_JITTER = 1e-10
MAX_JITTER = 1e-4
PREDICT_CHUNK = 2048
LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefinite(AldbError, np.linalg.LinAlgError):
    pass


class NonFiniteInput(AldbError, ValueError):
    pass


class HyperSearchFailed(AldbError, RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    length_scale: float
    signal_variance: float = 1.0
    noise_variance: float = 0.0

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise_variance must be non-negative, got {self.noise_variance}")


def sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # accumulated per coordinate: each entry is independent of the batch shape
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"inputs have {A.shape[1]} and {B.shape[1]} columns")
    D = np.zeros((A.shape[0], B.shape[0]))
    diff = np.empty_like(D)
    for k in range(A.shape[1]):
        np.subtract.outer(A[:, k], B[:, k], out=diff)
        np.multiply(diff, diff, out=diff)
        D += diff
    return D


def kernel_matrix(A, B, p: KernelParams) -> np.ndarray:
    K = np.exp(sq_dist(A, B) * (-0.5 / p.length_scale**2))
    K *= p.signal_variance
    return K


def rbf_kernel(u, v, p: KernelParams) -> float:
    """k(u, v) = s2 * exp(-|u - v|^2 / (2 l^2))."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    return float(kernel_matrix(u.reshape(1, -1), v.reshape(1, -1), p)[0, 0])


def _check_inputs(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need at least one training input")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("training inputs contain NaN or inf")
    return X


def cholesky_with_jitter(K: np.ndarray, noise: float, jitter: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + (noise + jitter) I``.

    On failure the jitter is multiplied by 10 until it would exceed
    ``MAX_JITTER``. Returns the factor and the jitter actually used.
    """
    n = K.shape[0]
    eye = np.eye(n)
    while True:
        try:
            L = linalg.cholesky(K + (noise + jitter) * eye, lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter
        except linalg.LinAlgError:
            pass
        if jitter <= 0 or jitter * 10 > MAX_JITTER:
            raise NotPositiveDefinite(f"kernel matrix not positive definite (jitter {jitter:g})")
        jitter *= 10


def standardize(y: np.ndarray) -> tuple[np.ndarray, float, float, bool]:
    """Return (standardized y, mean, scale, is_constant)."""
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 0 or std <= 1e-12 * max(1.0, abs(mean)):
        return np.zeros_like(y), mean, 1.0, True
    return (y - mean) / std, mean, std, False


@dataclass(frozen=True)
class OutputGP:
    params: KernelParams
    L: np.ndarray
    alpha: np.ndarray
    y: np.ndarray  # targets as fitted (standardized unless disabled)
    mean: float
    scale: float
    constant: bool
    jitter: float


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and standard deviation, shape (q, m), in raw output units."""

    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class GprModel:
    X: np.ndarray
    outputs: tuple[OutputGP, ...]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return len(self.outputs)

    def predict(self, U, chunk_size: int = PREDICT_CHUNK, workers: int = 1) -> Prediction:
        return predict(self, U, chunk_size=chunk_size, workers=workers)

    def latent(self, U, chunk_size: int = PREDICT_CHUNK, workers: int = 1,
               with_mean: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and std in fitted (standardized) units, each (q, m).

        With ``with_mean=False`` the mean is skipped and returned as NaN.
        """
        return _latent(self, U, chunk_size, workers, with_mean)


def fit(X, Y, params: "KernelParams | Sequence[KernelParams]", jitter: float = DEFAULT_JITTER,
        standardize_y: bool = True) -> GprModel:
    """Fit one independent GP per output column of ``Y`` on shared inputs ``X``."""
    X = _check_inputs(X)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} inputs but {Y.shape[0]} targets")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("training targets contain NaN or inf")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    if isinstance(params, KernelParams):
        params = [params] * Y.shape[1]
    params = list(params)
    if len(params) != Y.shape[1]:
        raise DimensionMismatch(f"{len(params)} kernel parameter sets for {Y.shape[1]} outputs")

    X = X.copy()
    X.flags.writeable = False
    outputs = []
    factors: dict[tuple, tuple[np.ndarray, float]] = {}
    for j, p in enumerate(params):
        if standardize_y:
            y, mean, scale, constant = standardize(Y[:, j])
        else:
            y, mean, scale, constant = Y[:, j].copy(), 0.0, 1.0, False
        key = (p.length_scale, p.signal_variance, p.noise_variance)
        if key not in factors:
            factors[key] = cholesky_with_jitter(kernel_matrix(X, X, p), p.noise_variance, jitter)
        L, used = factors[key]
        alpha = linalg.cho_solve((L, True), y, check_finite=False)
        outputs.append(OutputGP(p, L, alpha, y, mean, scale, constant, used))
    return GprModel(X, tuple(outputs))


def _latent_chunk(model: GprModel, U: np.ndarray, with_mean: bool = True) -> tuple[np.ndarray, np.ndarray]:
    mu = np.full((U.shape[0], model.m), np.nan)
    sd = np.empty((U.shape[0], model.m))
    D = sq_dist(U, model.X)
    done: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for j, out in enumerate(model.outputs):
        p = out.params
        key = id(out.L)  # outputs with equal params share one factor
        if key in done:
            Ks, var = done[key]
        else:
            Ks = np.exp(D * (-0.5 / p.length_scale**2))
            Ks *= p.signal_variance
            V = linalg.solve_triangular(out.L, Ks.T, lower=True, check_finite=False)
            var = p.signal_variance - (V * V).sum(axis=0)
            done[key] = (Ks, var)
        if with_mean:
            mu[:, j] = (Ks * out.alpha).sum(axis=1)
        sd[:, j] = np.sqrt(np.maximum(var, 0.0))
    return mu, sd


def _latent(model: GprModel, U, chunk_size: int = PREDICT_CHUNK, workers: int = 1, with_mean: bool = True):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != model.d:
        raise DimensionMismatch(f"query has {U.shape[1]} columns, model expects {model.d}")
    q = U.shape[0]
    if q == 0:
        return np.zeros((0, model.m)), np.zeros((0, model.m))
    starts = list(range(0, q, max(1, int(chunk_size))))
    bounds = [(s, min(s + chunk_size, q)) for s in starts]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _latent_chunk(model, U[b[0]:b[1]], with_mean), bounds))
    else:
        parts = [_latent_chunk(model, U[a:b], with_mean) for a, b in bounds]
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def predict(model: GprModel, U, chunk_size: int = PREDICT_CHUNK, workers: int = 1) -> Prediction:
    mu, sd = _latent(model, U, chunk_size, workers)
    means = np.array([o.mean for o in model.outputs])
    scales = np.array([o.scale for o in model.outputs])
    return Prediction(means + scales * mu, scales * sd)


def log_marginal_likelihood(X, y, p: KernelParams, jitter: float = DEFAULT_JITTER) -> float:
    """Log evidence of targets ``y`` (used as given, normally standardized)."""
    X = _check_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("targets contain NaN or inf")
    L, _ = cholesky_with_jitter(kernel_matrix(X, X, p), p.noise_variance, jitter)
    a = linalg.cho_solve((L, True), y, check_finite=False)
    return float(-0.5 * y @ a - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * LOG_2PI)


@dataclass(frozen=True)
class HyperSearchSpec:
    length_scales: tuple[float, ...] = tuple(np.geomspace(0.05, 2.0, 16))
    signal_variances: tuple[float, ...] = tuple(np.geomspace(0.25, 4.0, 8))
    noise_variances: tuple[float, ...] = tuple(np.geomspace(1e-8, 1e-2, 7))
    halvings: int = 3
    jitter: float = DEFAULT_JITTER


class _Evidence:
    """LML over (signal, noise) pairs for one length scale.

    With R = Q diag(lam) Q^T the kernel correlation matrix,
    K + s I = Q diag(sf2 * lam + s) Q^T, so each pair costs O(n) once R is
    diagonalized.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, length_scale: float):
        R = kernel_matrix(X, X, KernelParams(length_scale))
        self.lam, Q = linalg.eigh(R, driver="evd", check_finite=False)
        self.b2 = (Q.T @ y) ** 2
        self.n = len(y)

    def grid(self, sf2: np.ndarray, noise: np.ndarray, jitter: float) -> np.ndarray:
        """LML table of shape (len(sf2), len(noise)); -inf where K is not PD."""
        ev = sf2[:, None, None] * self.lam + (noise[None, :, None] + jitter)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -0.5 * np.sum(self.b2 / ev, axis=-1) - 0.5 * np.sum(np.log(ev), axis=-1) - 0.5 * self.n * LOG_2PI
        val[np.any(ev <= 0, axis=-1)] = -np.inf
        return val


def optimize_hyperparams(X, y, search: HyperSearchSpec = HyperSearchSpec()) -> KernelParams:
    """Maximize the log marginal likelihood on a log grid, then refine locally.

    ``y`` is a single raw output column; it is standardized the same way
    :func:`fit` does. Deterministic for fixed inputs.
    """
    X = _check_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("hyperparameter search needs at least two points")
    ys, *_ = standardize(y)
    jit = search.jitter
    sf2s = np.asarray(search.signal_variances, dtype=float)
    sn2s = np.asarray(search.noise_variances, dtype=float)

    best, best_val, best_ev = None, -np.inf, None
    for ell in search.length_scales:
        ev = _Evidence(X, ys, ell)
        table = ev.grid(sf2s, sn2s, jit)
        i, j = np.unravel_index(np.argmax(table), table.shape)  # first max in (sf2, sn2) order
        if table[i, j] > best_val:
            best, best_val, best_ev = [float(ell), float(sf2s[i]), float(sn2s[j])], float(table[i, j]), ev
    if best is None:
        raise HyperSearchFailed("no grid cell could be factorized")

    def score(theta) -> float:
        if theta[0] == best[0]:
            return float(best_ev.grid(np.array([theta[1]]), np.array([theta[2]]), jit)[0, 0])
        try:
            return log_marginal_likelihood(X, ys, KernelParams(*theta), jit)
        except NotPositiveDefinite:
            return -np.inf

    steps = [_log_step(search.length_scales), _log_step(search.signal_variances),
             _log_step(search.noise_variances)]
    # one coordinate-descent pass: per axis, try both neighbours at a halving step
    for axis in range(3):
        step = steps[axis] / 2.0
        for _ in range(search.halvings):
            for sign in (-1.0, 1.0):
                trial = list(best)
                trial[axis] = best[axis] * math.exp(sign * step)
                val = score(trial)
                if val > best_val:
                    if axis == 0:
                        best_ev = _Evidence(X, ys, trial[0])
                    best, best_val = trial, val
                    break
            step /= 2.0
    return KernelParams(float(best[0]), float(best[1]), float(best[2]))


def _log_step(values: Sequence[float]) -> float:
    if len(values) < 2:
        return math.log(2.0)
    return (math.log(values[-1]) - math.log(values[0])) / (len(values) - 1)


def fit_optimized(X, Y, search: HyperSearchSpec = HyperSearchSpec(), jitter: float = DEFAULT_JITTER) -> GprModel:
    """Fit with per-output hyperparameters chosen by :func:`optimize_hyperparams`."""
    X = _check_inputs(X)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    params: list[KernelParams] = []
    found: dict[bytes, KernelParams] = {}
    for j in range(Y.shape[1]):
        ys, *_ = standardize(Y[:, j])
        # the evidence is invariant to a sign flip of the targets
        key = (ys if ys[np.argmax(np.abs(ys))] >= 0 else -ys).round(12).tobytes()
        if key not in found:
            found[key] = optimize_hyperparams(X, Y[:, j], search)
        params.append(found[key])
    return fit(X, Y, params, jitter=jitter)
