"""Deterministic stand-ins for the expensive simulation.

Two families: a closed-form Bragg-like reflectance surrogate whose spectrum is
reduced to (amplitude, bandwidth, center frequency) by a Gaussian fit of the
main lobe, and smooth synthetic functions for controlled benchmarks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .core import AldbError, ParameterSpace, normalize


class OracleError(AldbError, RuntimeError):
    """Raised when an oracle cannot produce outputs for a point."""


class NoLobe(OracleError):
    pass


class InsufficientPoints(OracleError):
    pass


class GridTooNarrow(OracleError, ValueError):
    pass


class UnknownKind(AldbError, ValueError):
    pass


class Oracle(Protocol):
    name: str
    space: ParameterSpace
    m: int

    def __call__(self, x) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Bragg surrogate


@dataclass(frozen=True)
class BraggConstants:
    """Surrogate constants. These are configuration, not physical claims."""

    coupling: float = 1e-6          # c1, 1/(um nm^2)
    bandwidth_scale: float = 27.3   # c2, THz um
    chirp_broadening: float = 5e-4  # c3, per (nm/mm * um)
    index_shift: float = 0.02       # c4
    side_lobe: float = 0.15         # c5, side-lobe ceiling relative to peak
    n_ref: float = 3.2
    f_bragg: float = 193.4          # THz
    lorentz: float = 0.05           # shape factor of the main lobe
    side_period: float = 2.0        # side-lobe spacing in bandwidth units
    grid_points: int = 801
    grid_halfspan: float = 8.0      # auto-grid half width in bandwidth units


DEFAULT_BRAGG = BraggConstants()

BRAGG_SPACE = ParameterSpace.from_bounds([
    ("length", 100.0, 1000.0),   # um
    ("depth", 20.0, 200.0),      # nm
    ("width", 50.0, 300.0),      # nm
    ("index", 2.6, 3.1),
    ("chirp", 0.0, 2.0),         # nm/mm
    ("order", 1.0, 4.0),
])


@dataclass(frozen=True)
class BraggParams:
    length: float
    depth: float
    width: float
    index: float
    chirp: float
    order: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("grating length must be positive")
        if not self.order >= 1:
            raise ValueError("grating order must be >= 1")

    @classmethod
    def from_vector(cls, x) -> "BraggParams":
        return cls(*map(float, np.asarray(x, dtype=float).ravel()[:6]))

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class FrequencyGrid:
    start: float
    stop: float
    num: int = 801

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class Spectrum:
    frequency: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        r = np.asarray(self.reflectance, dtype=float)
        if f.shape != r.shape or f.ndim != 1 or f.size < 16:
            raise ValueError("spectrum needs equal-length arrays of at least 16 samples")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "reflectance", r)


@dataclass(frozen=True)
class LobeFit:
    amplitude: float
    bandwidth: float
    frequency: float

    def as_array(self) -> np.ndarray:
        return np.array([self.amplitude, self.bandwidth, self.frequency])


def bragg_lobe(p: BraggParams, c: BraggConstants = DEFAULT_BRAGG) -> tuple[float, float, float]:
    """Closed-form (peak reflectance, lobe width, center frequency)."""
    contrast = p.index - c.n_ref
    q = c.coupling * p.depth * p.width * abs(contrast) / p.order
    peak = math.tanh(q * p.length) ** 2
    width = c.bandwidth_scale * math.sqrt(q * q + (math.pi / p.length) ** 2) * (1.0 + c.chirp_broadening * abs(p.chirp) * p.length)
    center = c.f_bragg * (1.0 + c.index_shift * contrast)
    return peak, width, center


def lobe_shape(x: np.ndarray, c: BraggConstants = DEFAULT_BRAGG) -> np.ndarray:
    """Normalized line shape in units of the lobe width; equals 1 only at x = 0."""
    x = np.asarray(x, dtype=float)
    main = np.exp(-0.5 * x * x) / (1.0 + c.lorentz * x * x)
    side = np.sin(math.pi * x / c.side_period) ** 2 * (1.0 - np.exp(-x * x / 8.0)) * np.exp(-x * x / 200.0)
    return main + c.side_lobe * (1.0 - main) * side


def bragg_spectrum(p: BraggParams, grid: FrequencyGrid | None = None,
                   constants: BraggConstants = DEFAULT_BRAGG) -> Spectrum:
    peak, width, center = bragg_lobe(p, constants)
    if grid is None:
        half = constants.grid_halfspan * width
        grid = FrequencyGrid(center - half, center + half, constants.grid_points)
    if grid.start > center - 6 * width or grid.stop < center + 6 * width:
        raise GridTooNarrow(f"grid [{grid.start}, {grid.stop}] does not cover {center} +/- 6*{width}")
    f = grid.values()
    return Spectrum(f, peak * lobe_shape((f - center) / width, constants))


def fit_main_lobe(s: Spectrum) -> LobeFit:
    """Gaussian fit of the part of the main lobe above one third of its peak.

    The fit is linear least squares of log-reflectance against a parabola in
    frequency over the contiguous run around the global maximum.
    """
    f, r = s.frequency, s.reflectance
    i = int(np.argmax(r))
    r_max = float(r[i])
    if not r_max > 0 or i == 0 or i == r.size - 1:
        raise NoLobe("spectrum has no interior maximum")
    cut = r_max / 3.0
    lo = i
    while lo > 0 and r[lo - 1] >= cut:
        lo -= 1
    hi = i
    while hi < r.size - 1 and r[hi + 1] >= cut:
        hi += 1
    if hi - lo + 1 < 4:
        raise InsufficientPoints(f"only {hi - lo + 1} samples in the top of the main lobe")
    scale = 0.5 * (f[hi] - f[lo])
    t = (f[lo:hi + 1] - f[i]) / scale
    design = np.stack([np.ones_like(t), t, t * t], axis=1)
    (c0, c1, c2), *_ = np.linalg.lstsq(design, np.log(r[lo:hi + 1]), rcond=None)
    if not c2 < 0:
        raise NoLobe("main lobe is not concave in log space")
    t0 = -c1 / (2.0 * c2)
    return LobeFit(
        amplitude=float(np.exp(c0 - c1 * c1 / (4.0 * c2))),
        bandwidth=float(math.sqrt(-1.0 / (2.0 * c2)) * scale),
        frequency=float(f[i] + t0 * scale),
    )


@dataclass(frozen=True)
class BraggOracle:
    space: ParameterSpace = BRAGG_SPACE
    constants: BraggConstants = DEFAULT_BRAGG
    name: str = "bragg"
    m: int = 3

    def spectrum(self, x) -> Spectrum:
        return bragg_spectrum(BraggParams.from_vector(x), constants=self.constants)

    def __call__(self, x) -> np.ndarray:
        return fit_main_lobe(self.spectrum(x)).as_array()


def bragg_oracle(p: "BraggParams | np.ndarray", constants: BraggConstants = DEFAULT_BRAGG) -> np.ndarray:
    if not isinstance(p, BraggParams):
        p = BraggParams.from_vector(p)
    return fit_main_lobe(bragg_spectrum(p, constants=constants)).as_array()


def write_spectrum_csv(s: Spectrum, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frequency", "reflectance"])
        for fv, rv in zip(s.frequency, s.reflectance):
            w.writerow([format(fv, ".17g"), format(rv, ".17g")])
    return path


# ---------------------------------------------------------------------------
# Synthetic test functions on the unit cube


def _smooth_additive(u: np.ndarray) -> np.ndarray:
    return np.sum(np.sin(3.0 * u) + u * u, axis=-1)


def _product_peak(u: np.ndarray) -> np.ndarray:
    return np.prod(np.exp(-((u - 0.3) ** 2) / 0.1), axis=-1)


def _ridge(u: np.ndarray) -> np.ndarray:
    return np.sin(5.0 * np.sum(u, axis=-1) / u.shape[-1])


SYNTHETIC_KINDS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "smooth-additive": _smooth_additive,
    "product-peak": _product_peak,
    "ridge": _ridge,
}

# (slope, offset) per output channel
CHANNEL_MAPS = ((1.0, 0.0), (0.5, 1.0), (-2.0, 0.5))


@dataclass(frozen=True)
class SyntheticOracle:
    kind: str
    space: ParameterSpace
    m: int = 3
    name: str = field(init=False)

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise UnknownKind(f"unknown synthetic oracle {self.kind!r}; choose from {sorted(SYNTHETIC_KINDS)}")
        object.__setattr__(self, "name", self.kind)

    def base(self, u) -> np.ndarray:
        return SYNTHETIC_KINDS[self.kind](np.asarray(u, dtype=float))

    def __call__(self, x) -> np.ndarray:
        g = float(self.base(normalize(x, self.space)))
        return np.array([a * g + b for a, b in CHANNEL_MAPS[: self.m]])


def synthetic_oracle(kind: str, d: int, space: ParameterSpace | None = None) -> SyntheticOracle:
    space = ParameterSpace.unit(d) if space is None else space
    if space.d != d:
        raise ValueError(f"space has {space.d} dims, expected {d}")
    return SyntheticOracle(kind, space)


def make_oracle(name: str, space: ParameterSpace, bragg_constants: BraggConstants = DEFAULT_BRAGG):
    if name == "bragg":
        if space.d != 6:
            raise ValueError("the bragg oracle needs the six grating parameters")
        return BraggOracle(space, bragg_constants)
    return synthetic_oracle(name, space.d, space)
