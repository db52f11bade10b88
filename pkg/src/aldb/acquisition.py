"""Acquisition scoring over a dense candidate lattice."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import AldbError, ParameterSpace, denormalize, duplicate_keys
from .gpr import PREDICT_CHUNK, GprModel

MESH_CAP = 5_000_000


class ResolutionTooSmall(AldbError, ValueError):
    pass


class MeshTooLarge(AldbError, ValueError):
    pass


class MeshExhausted(AldbError, RuntimeError):
    pass


class NegativeStd(AldbError, ValueError):
    pass


class Aggregation(str, enum.Enum):
    SUM_STD = "SumStd"
    MAX_STD = "MaxStd"


@dataclass(frozen=True)
class AcquisitionSpec:
    kappa: float = 0.0
    aggregation: Aggregation = Aggregation.SUM_STD

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))


class CandidateMesh:
    """``r**d`` lattice with canonical lexicographic indexing (last dim fastest).

    Level ``j`` of every dimension sits at unit coordinate ``j / (r - 1)``.
    Holds the explored set; mutation is single-writer.
    """

    def __init__(self, space: ParameterSpace, resolution: int = 11, cap: int = MESH_CAP):
        if resolution < 2:
            raise ResolutionTooSmall(f"mesh resolution must be >= 2, got {resolution}")
        size = resolution ** space.d
        if size > cap:
            raise MeshTooLarge(f"{resolution}^{space.d} = {size} candidates exceeds cap {cap}")
        self.space = space
        self.resolution = resolution
        self.size = size
        self.shape = (resolution,) * space.d
        self.levels = np.arange(resolution) / (resolution - 1)
        self._explored = np.zeros(size, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def unit_points(self, indices) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        coords = np.unravel_index(idx, self.shape)
        return np.stack([self.levels[c] for c in coords], axis=-1)

    def points(self, indices) -> np.ndarray:
        return denormalize(self.unit_points(indices), self.space)

    def index_of(self, unit_point) -> int | None:
        """Canonical index of a unit-cube point, or None if it is off-lattice."""
        u = np.asarray(unit_point, dtype=float)
        j = np.rint(u * (self.resolution - 1)).astype(np.int64)
        if np.any(j < 0) or np.any(j >= self.resolution) or not np.allclose(self.levels[j], u, rtol=0, atol=1e-12):
            return None
        return int(np.ravel_multi_index(tuple(j), self.shape))

    @property
    def explored(self) -> np.ndarray:
        return np.flatnonzero(self._explored)

    def unexplored(self) -> np.ndarray:
        return np.flatnonzero(~self._explored)

    def is_explored(self, index: int) -> bool:
        return bool(self._explored[index])

    def mark_explored(self, index: int):
        self._explored[int(index)] = True

    def copy(self) -> "CandidateMesh":
        out = CandidateMesh.__new__(CandidateMesh)
        out.__dict__.update(self.__dict__)
        out._explored = self._explored.copy()
        return out


def build_mesh(space: ParameterSpace, resolution: int = 11, cap: int = MESH_CAP) -> CandidateMesh:
    return CandidateMesh(space, resolution, cap)


def acquisition_value(mu, sigma, spec: AcquisitionSpec = AcquisitionSpec()):
    """``mu + kappa * sigma``; with kappa = 0 the mean term is dropped and the value is ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise NegativeStd("standard deviation must be non-negative")
    if spec.kappa == 0:
        out = sigma.copy() if sigma.ndim else float(sigma)
        return out
    out = np.asarray(mu, dtype=float) + spec.kappa * sigma
    return out if out.ndim else float(out)


def aggregate(values, spec: AcquisitionSpec = AcquisitionSpec(), scales=None):
    """Combine per-output acquisition values (last axis) into one score.

    ``values`` are taken to be in standardized output units; pass ``scales``
    (per-output training-target std) to convert raw values first.
    """
    v = np.asarray(values, dtype=float)
    if scales is not None:
        v = v / np.asarray(scales, dtype=float)
    if spec.aggregation is Aggregation.SUM_STD:
        out = v.sum(axis=-1)
    else:
        out = v.max(axis=-1)
    return out if np.ndim(out) else float(out)


def score_candidates(model: GprModel, U: np.ndarray, spec: AcquisitionSpec = AcquisitionSpec(),
                     workers: int = 1, chunk_size: int = PREDICT_CHUNK) -> np.ndarray:
    """Aggregated acquisition score for each row of unit-cube candidates ``U``."""
    mu, sd = model.latent(U, chunk_size=chunk_size, workers=workers, with_mean=spec.kappa > 0)
    return aggregate(acquisition_value(mu, sd, spec), spec)


def select_next(model: GprModel, mesh: CandidateMesh, spec: AcquisitionSpec = AcquisitionSpec(),
                exclude=(), workers: int = 1, chunk_size: int = PREDICT_CHUNK) -> tuple[np.ndarray, float, int]:
    """Pick the unexplored mesh point with the highest score and mark it explored.

    Ties go to the smallest canonical index. Candidates whose normalized
    coordinates match a key in ``exclude`` (see :func:`aldb.core.duplicate_keys`)
    are marked explored and skipped. Returns ``(physical point, score, index)``.
    """
    excluded = set(exclude)
    while True:
        idx = mesh.unexplored()
        if idx.size == 0:
            raise MeshExhausted("every candidate mesh point has been explored")
        scores = np.empty(idx.size)
        step = max(1, int(chunk_size)) * 16
        for start in range(0, idx.size, step):
            sl = slice(start, start + step)
            scores[sl] = score_candidates(model, mesh.unit_points(idx[sl]), spec, workers, chunk_size)
        best = int(np.argmax(scores))  # first maximum == smallest index
        index = int(idx[best])
        mesh.mark_explored(index)
        unit = mesh.unit_points(index)[0]
        if excluded and duplicate_keys(unit)[0] in excluded:
            continue
        return mesh.points(index)[0], float(scores[best]), index
