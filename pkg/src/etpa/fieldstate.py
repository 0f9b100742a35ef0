"""Light states, pulse shapes and their spectral and temporal transforms.

Conventions used throughout the package:

* Frequency integrals carry the measure ``dω / 2π``.
* Spectral amplitudes are stored in *envelope* form: an analytic shape is a
  function of the offset ``z = ω - ω0`` and the carrier is added back by
  :class:`SpectralAmplitude`.
* Temporal envelopes are ``A(t) = ∫ dz/2π φ(ω0 + z) exp(-i z t)``, so the
  carrier oscillation ``exp(-i ω0 t)`` is factored out.
* Reduced units set ``ħ = ε0 = c = 1`` and the field prefactor ``L0 = 1``
  unless an :class:`SIContext` is supplied.
"""

from __future__ import annotations

import abc
import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy import constants, integrate

from .errors import DegenerateStateError, GridQualityWarning, NonIsolatedPairWarning

TWO_PI = 2.0 * math.pi
DEFAULT_GRID_POINTS = 4096
DEFAULT_SPAN = 8.0
MAX_JOINT_POINTS = 1025


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of angular frequencies with a designated carrier ``center``."""

    points: np.ndarray
    center: float

    def __post_init__(self):
        pts = _frozen_array(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a frequency grid needs at least two points")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        spacing = (pts[-1] - pts[0]) / (pts.size - 1)
        if np.max(np.abs(steps - spacing)) > 1e-12 * max(abs(spacing), np.max(np.abs(pts))):
            raise ValueError("grid spacing must be uniform")
        if not pts[0] <= self.center <= pts[-1]:
            raise ValueError("grid center must lie inside the grid")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", float(self.center))

    @classmethod
    def uniform(cls, center: float, half_width: float, n: int = DEFAULT_GRID_POINTS) -> "FrequencyGrid":
        half_width = _positive("half_width", half_width)
        return cls(np.linspace(center - half_width, center + half_width, int(n)), center)

    @property
    def spacing(self) -> float:
        return float((self.points[-1] - self.points[0]) / (self.points.size - 1))

    @property
    def offsets(self) -> np.ndarray:
        return self.points - self.center

    def __len__(self) -> int:
        return int(self.points.size)


def trapezoid_measure(values: np.ndarray, spacing: float, axis: int = -1):
    """Trapezoid rule for ``∫ f dω/2π`` on a uniform grid."""
    return integrate.trapezoid(values, dx=spacing, axis=axis) / TWO_PI


# ---------------------------------------------------------------------------
# Pulse shapes (functions of the envelope offset z = ω - ω0)


class PulseShape(abc.ABC):
    """A unit-normalized one-photon spectral envelope in offset frequency."""

    @abc.abstractmethod
    def spectrum(self, z):
        """Spectral amplitude at offset ``z``."""

    @abc.abstractmethod
    def envelope(self, t):
        """Temporal envelope at time ``t`` (carrier removed)."""

    @property
    @abc.abstractmethod
    def width(self) -> float:
        """Characteristic spectral half-width used for grids and ordering."""

    def is_even(self) -> bool:
        return False


@dataclass(frozen=True)
class Rectangular(PulseShape):
    """Flat-top pulse of length ``duration``; sinc spectrum."""

    duration: float

    def __post_init__(self):
        _positive("duration", self.duration)

    def spectrum(self, z):
        T = self.duration
        return math.sqrt(T) * np.sinc(np.asarray(z, dtype=float) * T / TWO_PI) + 0j

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        half = 0.5 * self.duration
        height = 1.0 / math.sqrt(self.duration)
        inside = np.where(np.abs(t) < half, height, 0.0)
        return np.where(np.abs(t) == half, 0.5 * height, inside) + 0j

    @property
    def width(self) -> float:
        return TWO_PI / self.duration

    def is_even(self) -> bool:
        return True


@dataclass(frozen=True)
class ExponentialOneSided(PulseShape):
    """Sudden rise followed by exponential decay; Lorentzian amplitude of half-width ``rate``."""

    rate: float

    def __post_init__(self):
        _positive("rate", self.rate)

    def spectrum(self, z):
        g = self.rate
        return math.sqrt(2.0 * g) / (g - 1j * np.asarray(z, dtype=float))

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        g = self.rate
        decay = math.sqrt(2.0 * g) * np.exp(-g * np.maximum(t, 0.0))
        value = np.where(t > 0, decay, 0.0)
        return np.where(t == 0, 0.5 * math.sqrt(2.0 * g), value) + 0j

    @property
    def width(self) -> float:
        return self.rate


@dataclass(frozen=True)
class GaussianSpectral(PulseShape):
    """Gaussian amplitude whose intensity ``|φ|²`` has standard deviation ``width``."""

    sigma: float

    def __post_init__(self):
        _positive("sigma", self.sigma)

    def spectrum(self, z):
        s = self.sigma
        z = np.asarray(z, dtype=float)
        return (s * s / TWO_PI) ** -0.25 * np.exp(-z * z / (4.0 * s * s)) + 0j

    def envelope(self, t):
        s = self.sigma
        t = np.asarray(t, dtype=float)
        return (2.0 * s * s / math.pi) ** 0.25 * np.exp(-s * s * t * t) + 0j

    @property
    def width(self) -> float:
        return self.sigma

    def is_even(self) -> bool:
        return True


@dataclass(frozen=True)
class Sampled(PulseShape):
    """Spectral amplitude tabulated on a :class:`FrequencyGrid`.

    Offsets are measured from ``grid.center``; values outside the grid are zero.
    """

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_array(self.values, complex)
        if vals.shape != self.grid.points.shape:
            raise ValueError("sampled values must match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sampled values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_shape(cls, shape: PulseShape, grid: FrequencyGrid, normalize: bool = False) -> "Sampled":
        vals = shape.spectrum(grid.offsets)
        if normalize:
            vals = vals / math.sqrt(trapezoid_measure(np.abs(vals) ** 2, grid.spacing))
        return cls(grid, vals)

    def norm(self) -> float:
        return float(trapezoid_measure(np.abs(self.values) ** 2, self.grid.spacing))

    def spectrum(self, z):
        w = self.grid.center + np.asarray(z, dtype=float)
        re = np.interp(w, self.grid.points, self.values.real, left=0.0, right=0.0)
        im = np.interp(w, self.grid.points, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def envelope(self, t):
        return self.envelope_with_quality(t)[0]

    def envelope_with_quality(self, t):
        """Discrete transform plus a flag that is False when the grid cannot resolve ``t``."""
        t = np.asarray(t, dtype=float)
        z = self.grid.offsets
        h = self.grid.spacing
        weights = np.full(z.size, h / TWO_PI)
        weights[[0, -1]] *= 0.5
        phase = np.exp(-1j * np.multiply.outer(t, z))
        value = phase @ (weights * self.values)
        peak = float(np.max(np.abs(self.values))) or 1.0
        edges_small = max(abs(self.values[0]), abs(self.values[-1])) <= 1e-6 * peak
        resolved = bool(np.all(np.abs(t) <= math.pi / h)) and edges_small
        return value, resolved

    @property
    def width(self) -> float:
        dens = np.abs(self.values) ** 2
        total = dens.sum()
        if total == 0:
            return self.grid.spacing
        z = self.grid.offsets
        mean = (dens * z).sum() / total
        return float(math.sqrt(max((dens * (z - mean) ** 2).sum() / total, 0.0)) or self.grid.spacing)

    def is_even(self) -> bool:
        z = self.grid.offsets
        if not np.allclose(z, -z[::-1], rtol=0, atol=1e-12 * max(1.0, abs(z[-1]))):
            return False
        scale = float(np.max(np.abs(self.values))) or 1.0
        return bool(np.max(np.abs(self.values - self.values[::-1])) <= 1e-12 * scale)


@dataclass(frozen=True)
class SpectralAmplitude:
    """One-photon spectral amplitude ``φ(ω)`` with carrier ``omega0``.

    ``norm`` is the target value of ``∫|φ|² dω/2π``. Analytic shapes are scaled
    to it exactly; sampled shapes must already integrate to it.
    """

    shape: PulseShape
    omega0: float
    norm: float = 1.0

    def __post_init__(self):
        if self.norm < 0:
            raise ValueError("norm must be non-negative")
        if isinstance(self.shape, Sampled):
            if abs(self.shape.grid.center - self.omega0) > 1e-12 * max(1.0, abs(self.omega0)):
                raise ValueError("sampled shape must be centred on the carrier")
            actual = self.shape.norm()
            if abs(actual - self.norm) > 1e-9 * max(self.norm, 1e-300):
                raise ValueError(f"sampled spectrum integrates to {actual!r}, expected {self.norm!r}")

    @property
    def _scale(self) -> float:
        return 1.0 if isinstance(self.shape, Sampled) else math.sqrt(self.norm)

    def __call__(self, omega):
        return self._scale * self.shape.spectrum(np.asarray(omega, dtype=float) - self.omega0)

    def offset(self, z):
        """Amplitude at offset ``z`` from the carrier."""
        return self._scale * self.shape.spectrum(z)

    def envelope(self, t):
        return self._scale * self.shape.envelope(t)

    @property
    def width(self) -> float:
        return self.shape.width


def temporal_envelope(phi: SpectralAmplitude, t, return_quality: bool = False):
    """Temporal envelope ``A(t)`` of a spectral amplitude, carrier removed.

    For sampled spectra ``return_quality=True`` additionally returns a flag that
    is False when the grid is too coarse or too narrow for the requested times.
    """
    if isinstance(phi.shape, Sampled):
        value, ok = phi.shape.envelope_with_quality(t)
        value = phi._scale * value
    else:
        value, ok = phi.envelope(t), True
    if np.ndim(value) == 0:
        value = complex(value)
    return (value, ok) if return_quality else value


# ---------------------------------------------------------------------------
# Joint spectral amplitudes (functions of absolute frequencies)


class JointSpectralAmplitude(abc.ABC):
    """Two-photon amplitude ``ψ(ω, ω̃)`` with unit norm under ``dω dω̃ / 4π²``."""

    symmetric: bool = True

    @abc.abstractmethod
    def __call__(self, omega, omega_t):
        """Amplitude at absolute frequencies."""

    @property
    @abc.abstractmethod
    def center(self) -> float:
        """One-photon carrier ``ω0`` (half the pair sum frequency)."""

    @property
    @abc.abstractmethod
    def widths(self) -> tuple[float, float]:
        """(smallest, largest) spectral scale for grid construction."""

    def time_amplitude(self, ta, tb):
        """``∫∫ ψ(ω0+z, ω0+w) exp(-i z ta - i w tb)`` with the ``dω/2π`` measure."""
        return _numeric_time_amplitude(self, ta, tb)


@dataclass(frozen=True)
class Separable(JointSpectralAmplitude):
    """Uncorrelated pair, ``ψ = φ0(ω) φ0(ω̃)``."""

    phi0: SpectralAmplitude
    symmetric: bool = field(default=True, init=False)

    def __call__(self, omega, omega_t):
        return self.phi0(omega) * self.phi0(omega_t)

    @property
    def center(self) -> float:
        return self.phi0.omega0

    @property
    def widths(self):
        return (self.phi0.width, self.phi0.width)

    def time_amplitude(self, ta, tb):
        return self.phi0.envelope(ta) * self.phi0.envelope(tb)


@dataclass(frozen=True)
class AntiDiagonalSeparable(JointSpectralAmplitude):
    """Frequency-anticorrelated pair ``ψ_B((ω-ω̃)/2) ψ_N(ω+ω̃-ωp)``.

    ``narrow`` sets the spread of the pair sum frequency, ``broad`` the spread of
    the difference; the broad function must be even and wider than the narrow one.
    """

    narrow: PulseShape
    broad: PulseShape
    pump: float
    symmetric: bool = field(default=True, init=False)

    def __post_init__(self):
        if not self.broad.is_even():
            raise ValueError("the broad factor must be an even function")
        if not self.narrow.width < self.broad.width:
            raise ValueError("narrow width must be smaller than broad width")

    def __call__(self, omega, omega_t):
        omega = np.asarray(omega, dtype=float)
        omega_t = np.asarray(omega_t, dtype=float)
        return self.broad.spectrum(0.5 * (omega - omega_t)) * self.narrow.spectrum(omega + omega_t - self.pump)

    @property
    def center(self) -> float:
        return 0.5 * self.pump

    @property
    def widths(self):
        return (self.narrow.width, self.broad.width)

    def time_amplitude(self, ta, tb):
        ta = np.asarray(ta, dtype=float)
        tb = np.asarray(tb, dtype=float)
        return self.narrow.envelope(0.5 * (ta + tb)) * self.broad.envelope(ta - tb)


@dataclass(frozen=True)
class TypeIIAsymmetric(JointSpectralAmplitude):
    """Distinguishable-mode pair ``f(ω) g(ω̃)``; generally not exchange symmetric."""

    f: SpectralAmplitude
    g: SpectralAmplitude
    symmetric: bool = field(default=False, init=False)

    def __post_init__(self):
        if abs(self.f.omega0 - self.g.omega0) > 1e-12 * max(1.0, abs(self.f.omega0)):
            raise ValueError("both modes must share the carrier")

    def __call__(self, omega, omega_t):
        return self.f(omega) * self.g(omega_t)

    @property
    def center(self) -> float:
        return self.f.omega0

    @property
    def widths(self):
        a, b = self.f.width, self.g.width
        return (min(a, b), max(a, b))

    def time_amplitude(self, ta, tb):
        return self.f.envelope(ta) * self.g.envelope(tb)


@dataclass(frozen=True)
class Symmetrized(JointSpectralAmplitude):
    """Exchange-symmetric part of ``source`` divided by ``scale``."""

    source: JointSpectralAmplitude
    scale: float
    symmetric: bool = field(default=True, init=False)

    def __call__(self, omega, omega_t):
        return (self.source(omega, omega_t) + self.source(omega_t, omega)) / (2.0 * self.scale)

    @property
    def center(self) -> float:
        return self.source.center

    @property
    def widths(self):
        return self.source.widths

    def time_amplitude(self, ta, tb):
        return (self.source.time_amplitude(ta, tb) + self.source.time_amplitude(tb, ta)) / (2.0 * self.scale)


@dataclass(frozen=True)
class Sampled2D(JointSpectralAmplitude):
    """JSA tabulated on a tensor grid; ``values[i, j] = ψ(grid_a[i], grid_b[j])``.

    ``norm`` is the captured weight ``∫∫|ψ|²`` on the grid. It defaults to 1;
    grids that deliberately truncate slowly decaying tails pass the captured
    fraction instead. The trapezoid norm must equal it within 1e-9.
    """

    grid_a: FrequencyGrid
    grid_b: FrequencyGrid
    values: np.ndarray
    norm: float = 1.0
    symmetric: bool = field(default=False, init=False)

    def __post_init__(self):
        vals = _frozen_array(self.values, complex)
        if vals.shape != (len(self.grid_a), len(self.grid_b)):
            raise ValueError("matrix shape must match the two grids")
        object.__setattr__(self, "values", vals)
        actual = self.sampled_norm()
        if abs(actual - self.norm) > 1e-9 * max(self.norm, 1e-300):
            raise ValueError(f"sampled JSA integrates to {actual!r}, expected {self.norm!r}")
        same = len(self.grid_a) == len(self.grid_b) and np.array_equal(self.grid_a.points, self.grid_b.points)
        scale = float(np.max(np.abs(vals))) or 1.0
        sym = same and float(np.max(np.abs(vals - vals.T))) <= 1e-12 * scale
        object.__setattr__(self, "symmetric", bool(sym))

    @classmethod
    def from_jsa(cls, jsa: JointSpectralAmplitude, grid_a: FrequencyGrid, grid_b: FrequencyGrid | None = None,
                 normalize: bool = False) -> "Sampled2D":
        """Sample ``jsa``; the captured norm is recorded unless ``normalize`` rescales to 1."""
        grid_b = grid_a if grid_b is None else grid_b
        vals = jsa(grid_a.points[:, None], grid_b.points[None, :])
        if np.ndim(vals) == 0 or np.shape(vals) != (len(grid_a), len(grid_b)):
            vals = np.broadcast_to(vals, (len(grid_a), len(grid_b)))
        norm = _grid_norm(vals, grid_a.spacing, grid_b.spacing)
        if normalize:
            vals = vals / math.sqrt(norm)
            norm = _grid_norm(vals, grid_a.spacing, grid_b.spacing)
        return cls(grid_a, grid_b, vals, norm=norm)

    def sampled_norm(self) -> float:
        return _grid_norm(self.values, self.grid_a.spacing, self.grid_b.spacing)

    def __call__(self, omega, omega_t):
        omega, omega_t = np.broadcast_arrays(np.asarray(omega, float), np.asarray(omega_t, float))
        ga, gb = self.grid_a.points, self.grid_b.points
        fa = (omega - ga[0]) / self.grid_a.spacing
        fb = (omega_t - gb[0]) / self.grid_b.spacing
        inside = (fa >= 0) & (fa <= ga.size - 1) & (fb >= 0) & (fb <= gb.size - 1)
        ia = np.clip(np.floor(fa).astype(int), 0, ga.size - 2)
        ib = np.clip(np.floor(fb).astype(int), 0, gb.size - 2)
        ua = np.clip(fa - ia, 0.0, 1.0)
        ub = np.clip(fb - ib, 0.0, 1.0)
        v = self.values
        out = ((1 - ua) * (1 - ub) * v[ia, ib] + ua * (1 - ub) * v[ia + 1, ib]
               + (1 - ua) * ub * v[ia, ib + 1] + ua * ub * v[ia + 1, ib + 1])
        out = np.where(inside, out, 0.0)
        return complex(out) if out.ndim == 0 else out

    @property
    def center(self) -> float:
        return 0.5 * (self.grid_a.center + self.grid_b.center)

    @property
    def widths(self):
        h = min(self.grid_a.spacing, self.grid_b.spacing)
        span = max(np.ptp(self.grid_a.points), np.ptp(self.grid_b.points)) / (2 * DEFAULT_SPAN)
        return (h, span)

    def time_amplitude(self, ta, tb):
        ta = np.asarray(ta, dtype=float)
        tb = np.asarray(tb, dtype=float)
        za = self.grid_a.points - self.center
        zb = self.grid_b.points - self.center
        wa = _trapezoid_weights(za.size, self.grid_a.spacing / TWO_PI)
        wb = _trapezoid_weights(zb.size, self.grid_b.spacing / TWO_PI)
        ea = np.exp(-1j * np.multiply.outer(ta, za)) * wa
        eb = np.exp(-1j * np.multiply.outer(tb, zb)) * wb
        return np.einsum("...i,ij,...j->...", ea, self.values, eb)


JSA = Union[Separable, AntiDiagonalSeparable, TypeIIAsymmetric, Symmetrized, Sampled2D]


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[[0, -1]] *= 0.5
    return w


def _grid_norm(values, ha: float, hb: float) -> float:
    dens = np.abs(np.asarray(values)) ** 2
    return float(integrate.trapezoid(integrate.trapezoid(dens, dx=hb, axis=1), dx=ha) / TWO_PI**2)


def default_joint_grid(jsa: JointSpectralAmplitude, n: int | None = None) -> FrequencyGrid:
    """Square grid spanning ±8 times the largest JSA width around its carrier.

    The point count is capped at ``MAX_JOINT_POINTS`` per axis to keep matrices
    tractable; a :class:`GridQualityWarning` is issued if that leaves fewer than
    four points across the narrowest feature.
    """
    small, large = jsa.widths
    half = DEFAULT_SPAN * large
    if n is None:
        wanted = int(math.ceil(2 * half / (small / 4.0))) + 1
        n = min(max(wanted, 257), MAX_JOINT_POINTS)
        if wanted > MAX_JOINT_POINTS:
            warnings.warn("joint grid capped; narrow JSA features are under-resolved",
                          GridQualityWarning, stacklevel=2)
    return FrequencyGrid.uniform(jsa.center, half, n)


def _numeric_time_amplitude(jsa, ta, tb):
    grid = default_joint_grid(jsa)
    return Sampled2D.from_jsa(jsa, grid).time_amplitude(ta, tb)


# ---------------------------------------------------------------------------
# States


@dataclass(frozen=True)
class CoherentState:
    alpha0: complex
    phi: SpectralAmplitude

    def __post_init__(self):
        if abs(self.phi.norm - 1.0) > 1e-9:
            raise ValueError("coherent-state spectrum must be unit-normalized")


@dataclass(frozen=True)
class SinglePhotonState:
    phi: SpectralAmplitude

    def __post_init__(self):
        if abs(self.phi.norm - 1.0) > 1e-9:
            raise ValueError("single-photon spectrum must be unit-normalized")


@dataclass(frozen=True)
class TwoPhotonState:
    """Isolated photon pair: vacuum plus ``ε`` times a two-photon component."""

    epsilon: float
    jsa: JointSpectralAmplitude

    def __post_init__(self):
        eps = float(self.epsilon)
        if eps < 0 or not math.isfinite(eps):
            raise ValueError("epsilon must be a non-negative real number")
        if eps * eps > 0.1:
            warnings.warn(f"pair probability {eps * eps:.3g} exceeds 0.1; pairs are no longer isolated",
                          NonIsolatedPairWarning, stacklevel=3)


State = Union[CoherentState, SinglePhotonState, TwoPhotonState]


def mean_photon_number(state: State) -> float:
    if isinstance(state, CoherentState):
        return abs(state.alpha0) ** 2
    if isinstance(state, SinglePhotonState):
        return 1.0
    if isinstance(state, TwoPhotonState):
        return 2.0 * state.epsilon ** 2
    raise TypeError(f"unsupported state {type(state).__name__}")


# ---------------------------------------------------------------------------
# Symmetrization


class SymmetrizeResult(NamedTuple):
    jsa: JointSpectralAmplitude
    norm: float
    """Norm ``∫∫|(ψ + ψᵀ)/2|²`` before renormalization."""


def _overlap(f: SpectralAmplitude, g: SpectralAmplitude) -> complex:
    """``∫ f*(ω) g(ω) dω/2π``; trapezoid on sampled grids, adaptive quadrature otherwise."""
    for amp in (f, g):
        if isinstance(amp.shape, Sampled):
            grid = amp.shape.grid
            prod = np.conj(f.offset(grid.offsets)) * g.offset(grid.offsets)
            return complex(trapezoid_measure(prod, grid.spacing))

    def part(fn):
        val, _ = integrate.quad(fn, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
        return val / TWO_PI

    re_part = part(lambda z: float(np.real(np.conj(f.offset(z)) * g.offset(z))))
    im_part = part(lambda z: float(np.imag(np.conj(f.offset(z)) * g.offset(z))))
    return complex(re_part, im_part)


def symmetrize_jsa(jsa: JointSpectralAmplitude) -> SymmetrizeResult:
    """Exchange-symmetric, renormalized version of ``jsa`` and its pre-renormalization norm."""
    if jsa.symmetric:
        return SymmetrizeResult(jsa, 1.0)
    if isinstance(jsa, TypeIIAsymmetric):
        ov = _overlap(jsa.f, jsa.g)
        norm = 0.5 * (1.0 + abs(ov) ** 2)
        return SymmetrizeResult(Symmetrized(jsa, math.sqrt(norm)), norm)
    if isinstance(jsa, Sampled2D):
        if not np.array_equal(jsa.grid_a.points, jsa.grid_b.points):
            raise ValueError("symmetrizing a sampled JSA requires identical grids")
        sym = 0.5 * (jsa.values + jsa.values.T)
        norm = _grid_norm(sym, jsa.grid_a.spacing, jsa.grid_b.spacing)
        if norm <= 1e-24 * max(jsa.norm, 1e-300):
            raise DegenerateStateError("antisymmetric JSA: the symmetric part vanishes")
        out = Sampled2D(jsa.grid_a, jsa.grid_b, sym / math.sqrt(norm),
                        norm=_grid_norm(sym / math.sqrt(norm), jsa.grid_a.spacing, jsa.grid_b.spacing))
        return SymmetrizeResult(out, norm)
    raise TypeError(f"cannot symmetrize {type(jsa).__name__}")


def symmetrize_state(state: TwoPhotonState) -> TwoPhotonState:
    """Same physical state with an exchange-symmetric, unit-norm JSA; the norm moves into ε."""
    sym, norm = symmetrize_jsa(state.jsa)
    if sym is state.jsa:
        return state
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonIsolatedPairWarning)
        return TwoPhotonState(state.epsilon * math.sqrt(norm), sym)


def symmetric_part(jsa: JointSpectralAmplitude, omega, omega_t):
    """``(ψ(ω, ω̃) + ψ(ω̃, ω)) / 2`` without renormalization."""
    if jsa.symmetric:
        return jsa(omega, omega_t)
    return 0.5 * (jsa(omega, omega_t) + jsa(omega_t, omega))


# ---------------------------------------------------------------------------
# SI bookkeeping


@dataclass(frozen=True)
class SIContext:
    """Carrier, medium and beam data needed to convert to SI units."""

    omega0: float
    area: float
    n: float = 1.0
    hbar: float = constants.hbar
    eps0: float = constants.epsilon_0
    c: float = constants.c

    def __post_init__(self):
        for name in ("omega0", "area", "n", "hbar", "eps0", "c"):
            _positive(name, getattr(self, name))

    @classmethod
    def from_wavelength(cls, wavelength: float, area: float, n: float = 1.0) -> "SIContext":
        return cls(omega0=TWO_PI * constants.c / _positive("wavelength", wavelength), area=area, n=n)

    @property
    def L0(self) -> float:
        """Field per square-root photon flux at the molecule."""
        return math.sqrt(self.hbar * self.omega0 / (2.0 * self.eps0 * self.n * self.c * self.area))

    @property
    def coupling(self) -> float:
        """``ħω0 / (ε0 n c)``; equals ``2 A0 L0²``."""
        return self.hbar * self.omega0 / (self.eps0 * self.n * self.c)


def field_scale(si: SIContext | None) -> float:
    """``L0`` in SI mode, 1 in reduced units."""
    return 1.0 if si is None else si.L0


def beam_area(si: SIContext | None) -> float:
    return 1.0 if si is None else si.area


# ---------------------------------------------------------------------------
# Time-domain amplitude and correlations


def two_photon_detection_amplitude(state: TwoPhotonState, si: SIContext | None, ta, tb):
    """Amplitude ``Φ(ta, tb)`` to detect one photon at ``ta`` and one at ``tb``.

    Built from both orderings of the raw JSA, so an asymmetric JSA and its
    symmetrized counterpart (with ε rescaled) give the same result.
    """
    L0 = field_scale(si)
    jsa = state.jsa
    forward = jsa.time_amplitude(ta, tb)
    if jsa.symmetric:
        total = 2.0 * forward
    else:
        total = forward + jsa.time_amplitude(tb, ta)
    value = state.epsilon * L0 * L0 * total
    return complex(value) if np.ndim(value) == 0 else value


def four_freq_correlation(state: State, w_prime, w, w_tilde):
    """Normally ordered four-frequency field correlation with ``ω̃′ = ω + ω̃ − ω′``."""
    w_tilde_prime = np.asarray(w, float) + np.asarray(w_tilde, float) - np.asarray(w_prime, float)
    if isinstance(state, SinglePhotonState):
        return np.zeros_like(w_tilde_prime, dtype=complex) if np.ndim(w_tilde_prime) else 0j
    if isinstance(state, CoherentState):
        phi = state.phi
        n = abs(state.alpha0) ** 2
        value = n * n * np.conj(phi(w_prime) * phi(w_tilde_prime)) * phi(w) * phi(w_tilde)
    elif isinstance(state, TwoPhotonState):
        jsa = state.jsa
        value = (4.0 * state.epsilon ** 2 * np.conj(symmetric_part(jsa, w_prime, w_tilde_prime))
                 * symmetric_part(jsa, w, w_tilde))
    else:
        raise TypeError(f"unsupported state {type(state).__name__}")
    return complex(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Dispersion


def apply_dispersion(jsa: JointSpectralAmplitude, dispersion: float, grid: FrequencyGrid | None = None):
    """Quadratic spectral phase ``exp[i D/2 (z² + w²)]`` in envelope offsets.

    Returns ``jsa`` itself for zero dispersion and a :class:`Sampled2D` otherwise.
    """
    if dispersion == 0:
        return jsa
    if isinstance(jsa, Sampled2D):
        base = jsa
    else:
        base = Sampled2D.from_jsa(jsa, grid if grid is not None else default_joint_grid(jsa))
    c = base.center
    za = base.grid_a.points - c
    zb = base.grid_b.points - c
    phase = np.exp(0.5j * dispersion * (za[:, None] ** 2 + zb[None, :] ** 2))
    return Sampled2D(base.grid_a, base.grid_b, base.values * phase, norm=base.norm)


# ---------------------------------------------------------------------------
# CSV exchange format for sampled JSAs


def write_jsa_csv(path, jsa: Sampled2D) -> None:
    """Write a sampled JSA: two header rows with the grids, then one row per ``grid_a`` point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_a", repr(jsa.grid_a.center), *map(repr, jsa.grid_a.points.tolist())])
        w.writerow(["grid_b", repr(jsa.grid_b.center), *map(repr, jsa.grid_b.points.tolist())])
        for row in jsa.values:
            w.writerow([f"{v.real!r},{v.imag!r}" for v in row.tolist()])


def read_jsa_csv(path) -> Sampled2D:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or rows[0][0] != "grid_a" or rows[1][0] != "grid_b":
        raise ValueError("JSA CSV must start with grid_a and grid_b header rows")
    ga = FrequencyGrid(np.array(rows[0][2:], float), float(rows[0][1]))
    gb = FrequencyGrid(np.array(rows[1][2:], float), float(rows[1][1]))
    vals = np.array([[complex(*map(float, cell.split(","))) for cell in row] for row in rows[2:]])
    return Sampled2D(ga, gb, vals, norm=_grid_norm(vals, ga.spacing, gb.spacing))
