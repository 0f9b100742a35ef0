"""Fourth-order two-photon absorption: projections, autocorrelations and pathway sums.

The double-quantum-coherence (DQC) pathway is controlled by the anti-diagonal
projection ``K(x)`` of the two-photon spectrum. The step-wise pathways
(non-rephasing and rephasing) are controlled by the anti-diagonal
autocorrelation ``G(y)``. Both are evaluated far from one-photon resonance,
with closed forms for the named pulse shapes and grid sums otherwise.

Spectral factors are reported as ``2 ∫ dx/2π |K(x)|² / (λ + i x)`` with
``λ = γ_fg − iΔ`` and ``Δ = ω_fg − 2ω0``, so the probability is
``Re(prefactor · Σ⁽²⁾ · spectral_factor)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, NamedTuple

import numpy as np
from scipy import constants, integrate, special

from .errors import (
    ComplexDipoleError,
    DomainError,
    ImpulsiveGuardWarning,
    LargeCouplingRatioWarning,
    PerturbativeValidityWarning,
)
from .fieldstate import (
    TWO_PI,
    AntiDiagonalSeparable,
    CoherentState,
    ExponentialOneSided,
    GaussianSpectral,
    JointSpectralAmplitude,
    Rectangular,
    Sampled,
    Sampled2D,
    Separable,
    SinglePhotonState,
    SIContext,
    SpectralAmplitude,
    TwoPhotonState,
    default_joint_grid,
    field_scale,
    symmetrize_state,
)
from .molecule import LevelSystem, big_sigma2, check_M_real, resonance_guard

SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# Special functions


def _xi_series(z: float) -> float:
    # e^{z²} erf(z) = (2/√π) Σ 2ⁿ z^{2n+1} / (2n+1)!!, all terms positive
    term = z
    total = z
    z2 = z * z
    n = 0
    while term > 1e-17 * total:
        n += 1
        term *= 2.0 * z2 / (2 * n + 1)
        total += term
    return math.exp(z2) - 2.0 / SQRT_PI * total


def _xi_continued_fraction(z: float) -> float:
    # erfc(z) e^{z²} √π = 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))), modified Lentz
    tiny = 1e-300
    f = z
    c = z
    d = 0.0
    k = 1
    while True:
        a = 0.5 * k
        d = z + a * d
        d = 1.0 / (d if d != 0 else tiny)
        c = z + a / c
        if c == 0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16 or k > 5000:
            break
        k += 1
    return 1.0 / (SQRT_PI * f)


def xi_erfcx(z):
    """Scaled complementary error function ``exp(z²) erfc(z)`` for ``z ≥ 0``."""
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("xi_erfcx is defined here for z >= 0 only")

    def one(v):
        if v == math.inf:
            return 0.0
        return _xi_series(v) if v < 2.0 else _xi_continued_fraction(v)

    if arr.ndim == 0:
        return one(float(arr))
    return np.vectorize(one, otypes=[float])(arr)


def faddeeva(z):
    """``w(z) = exp(−z²) erfc(−iz)``; complex generalization of the scaled erfc."""
    return special.wofz(z)


def _rect_kernel(u):
    """``(u + e^{−u} − 1) / u²`` with a series near zero."""
    u = complex(u)
    if abs(u) < 0.5:
        term = 0.5
        total = term
        for n in range(1, 30):
            term *= -u / (n + 2)
            total += term
        return total
    return (u + np.expm1(-u)) / (u * u)


def _half_window(u):
    """``(1 − e^{−u/2}) / u`` with a series near zero."""
    u = complex(u)
    if abs(u) < 0.5:
        term = 0.5
        total = term
        for n in range(1, 30):
            term *= -0.5 * u / (n + 1)
            total += term
        return total
    return -np.expm1(-0.5 * u) / u


# ---------------------------------------------------------------------------
# Kernels


@dataclass(frozen=True)
class ProjectionKernel:
    """Complex function of the offset ``x = ω + ω̃ − 2ω0`` (or ``y`` for autocorrelations).

    Either ``func`` is an analytic evaluator or ``(x, values)`` tabulate it on a
    uniform grid; tabulated kernels interpolate linearly and vanish outside.
    """

    provenance: str
    func: Callable | None = None
    x: np.ndarray | None = None
    values: np.ndarray | None = None

    @property
    def analytic(self) -> bool:
        return self.func is not None

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    def __call__(self, x):
        if self.func is not None:
            return self.func(x)
        x = np.asarray(x, dtype=float)
        re = np.interp(x, self.x, self.values.real, left=0.0, right=0.0)
        im = np.interp(x, self.x, self.values.imag, left=0.0, right=0.0)
        out = re + 1j * im
        return complex(out) if out.ndim == 0 else out


def _antidiagonal_sums(values: np.ndarray, h: float):
    """``Σ_{i+j=m} v_ij · h/2π`` for every ``m``."""
    n_a, n_b = values.shape
    idx = (np.arange(n_a)[:, None] + np.arange(n_b)[None, :]).ravel()
    re = np.bincount(idx, weights=values.real.ravel(), minlength=n_a + n_b - 1)
    im = np.bincount(idx, weights=values.imag.ravel(), minlength=n_a + n_b - 1)
    return (re + 1j * im) * h / TWO_PI


def _equal_spacing(jsa: Sampled2D) -> float:
    ha, hb = jsa.grid_a.spacing, jsa.grid_b.spacing
    if abs(ha - hb) > 1e-12 * ha:
        raise ValueError("sampled JSA needs equal spacing on both axes")
    return ha


def k_projection_coherent(phi: SpectralAmplitude) -> ProjectionKernel:
    """Anti-diagonal projection ``∫ dz/2π φ(ω0+z) φ(ω0+x−z)`` of a one-photon spectrum."""
    shape = phi.shape
    scale = phi.norm
    if isinstance(shape, ExponentialOneSided):
        g = shape.rate
        return ProjectionKernel("coherent", func=lambda x: scale * 2 * g / (2 * g - 1j * np.asarray(x, float)))
    if isinstance(shape, Rectangular):
        T = shape.duration
        return ProjectionKernel("coherent", func=lambda x: scale * np.sinc(np.asarray(x, float) * T / TWO_PI) + 0j)
    if isinstance(shape, GaussianSpectral):
        s = shape.sigma
        return ProjectionKernel("coherent",
                                func=lambda x: scale * np.exp(-np.asarray(x, float) ** 2 / (8 * s * s)) + 0j)
    if isinstance(shape, Sampled):
        h = shape.grid.spacing
        vals = np.convolve(shape.values, shape.values) * h / TWO_PI
        z0 = shape.grid.offsets[0]
        return ProjectionKernel("coherent", x=2 * z0 + h * np.arange(vals.size), values=vals)
    raise TypeError(f"unsupported pulse shape {type(shape).__name__}")


def k_projection_jsa(jsa: JointSpectralAmplitude) -> ProjectionKernel:
    """Anti-diagonal projection ``∫ dz/2π Ψ(ω0+z, ω0+x−z)`` of a symmetric JSA."""
    if not jsa.symmetric:
        raise ValueError("projection requires an exchange-symmetric JSA; symmetrize first")
    if isinstance(jsa, Separable):
        k = k_projection_coherent(jsa.phi0)
        return ProjectionKernel("jsa", func=k.func, x=k.x, values=k.values)
    if isinstance(jsa, AntiDiagonalSeparable):
        weight = complex(jsa.broad.envelope(0.0))
        narrow = jsa.narrow
        return ProjectionKernel("jsa", func=lambda x: weight * narrow.spectrum(x))
    if not isinstance(jsa, Sampled2D):
        jsa = Sampled2D.from_jsa(jsa, default_joint_grid(jsa))
    h = _equal_spacing(jsa)
    vals = _antidiagonal_sums(jsa.values, h)
    c = jsa.center
    x0 = (jsa.grid_a.points[0] - c) + (jsa.grid_b.points[0] - c)
    return ProjectionKernel("jsa", x=x0 + h * np.arange(vals.size), values=vals)


def marginal_spectrum(state) -> Callable:
    """Single-photon spectrum as seen by a spectrometer."""
    if isinstance(state, (CoherentState, SinglePhotonState)):
        phi = state.phi
        return lambda w: np.abs(phi(w)) ** 2
    if not isinstance(state, TwoPhotonState):
        raise TypeError(f"unsupported state {type(state).__name__}")
    st = symmetrize_state(state)
    jsa = st.jsa
    if isinstance(jsa, Separable):
        return lambda w: np.abs(jsa.phi0(w)) ** 2
    sampled = jsa if isinstance(jsa, Sampled2D) else Sampled2D.from_jsa(jsa, default_joint_grid(jsa))
    rows = integrate.trapezoid(np.abs(sampled.values) ** 2, dx=sampled.grid_b.spacing, axis=1) / TWO_PI
    grid = sampled.grid_a.points
    return lambda w: np.interp(w, grid, rows, left=0.0, right=0.0)


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class PathwayResult:
    """Pathway integrals per intermediate pair and the assembled probabilities.

    Probabilities include the complex-conjugate closure ``2·Re``; ``raw_*``
    hold the un-closed complex sums ``Σ M·R``.
    """

    method: str
    prefactor: float
    dipole_sum: complex = 0j
    spectral_factor: complex | None = None
    r_dqc: Mapping = field(default_factory=dict)
    r_nrp: Mapping = field(default_factory=dict)
    r_rp: Mapping = field(default_factory=dict)
    q_values: Mapping = field(default_factory=dict)
    raw_dqc: complex = 0j
    raw_nrp: complex = 0j
    raw_rp: complex = 0j
    p_dqc: float = 0.0
    p_nrp: float = 0.0
    p_rp: float = 0.0
    p_step: float = 0.0
    """Combined non-rephasing plus rephasing probability, summed pairwise."""
    coupling_ratios: Mapping = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        for name in ("p_dqc", "p_nrp", "p_rp", "p_step", "prefactor"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("dipole_sum", "raw_dqc", "raw_nrp", "raw_rp"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if self.spectral_factor is not None:
            object.__setattr__(self, "spectral_factor", complex(self.spectral_factor))
        for name in ("r_dqc", "r_nrp", "r_rp", "q_values", "coupling_ratios"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))

    @property
    def p_total(self) -> float:
        return self.p_dqc + self.p_nrp + self.p_rp

    def merge(self, other: "PathwayResult") -> "PathwayResult":
        """Combine a DQC result with a step-wise result for the same state."""
        return PathwayResult(
            method=self.method if self.method == other.method else f"{self.method}+{other.method}",
            prefactor=self.prefactor,
            dipole_sum=self.dipole_sum or other.dipole_sum,
            spectral_factor=self.spectral_factor if self.spectral_factor is not None else other.spectral_factor,
            r_dqc={**self.r_dqc, **other.r_dqc},
            r_nrp={**self.r_nrp, **other.r_nrp},
            r_rp={**self.r_rp, **other.r_rp},
            q_values={**self.q_values, **other.q_values},
            raw_dqc=self.raw_dqc + other.raw_dqc,
            raw_nrp=self.raw_nrp + other.raw_nrp,
            raw_rp=self.raw_rp + other.raw_rp,
            p_dqc=self.p_dqc + other.p_dqc,
            p_nrp=self.p_nrp + other.p_nrp,
            p_rp=self.p_rp + other.p_rp,
            p_step=self.p_step + other.p_step,
            coupling_ratios={**self.coupling_ratios, **other.coupling_ratios},
            warnings=tuple(dict.fromkeys(self.warnings + other.warnings)),
        )

    def to_dict(self) -> dict:
        def cx(z):
            if z is None:
                return None
            z = complex(z)
            return {"re": z.real, "im": z.imag}

        def table(m):
            return {f"{e},{ep}": cx(v) for (e, ep), v in sorted(m.items())}

        return {
            "method": self.method,
            "prefactor": self.prefactor,
            "dipole_sum": cx(self.dipole_sum),
            "spectral_factor": cx(self.spectral_factor),
            "r_dqc": table(self.r_dqc),
            "r_nrp": table(self.r_nrp),
            "r_rp": table(self.r_rp),
            "q_values": table(self.q_values),
            "raw_dqc": cx(self.raw_dqc),
            "raw_nrp": cx(self.raw_nrp),
            "raw_rp": cx(self.raw_rp),
            "p_dqc": self.p_dqc,
            "p_nrp": self.p_nrp,
            "p_rp": self.p_rp,
            "p_step": self.p_step,
            "p_total": self.p_total,
            "coupling_ratios": {f"{e},{ep}": v for (e, ep), v in sorted(self.coupling_ratios.items())},
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# State bookkeeping


def carrier(state) -> float:
    if isinstance(state, (CoherentState, SinglePhotonState)):
        return state.phi.omega0
    if isinstance(state, TwoPhotonState):
        return state.jsa.center
    raise TypeError(f"unsupported state {type(state).__name__}")


def _prefactor(state, si) -> float:
    L4 = field_scale(si) ** 4
    if isinstance(state, CoherentState):
        return abs(state.alpha0) ** 4 * L4
    if isinstance(state, TwoPhotonState):
        return 4.0 * state.epsilon ** 2 * L4
    return 0.0


def _prepare(state):
    return symmetrize_state(state) if isinstance(state, TwoPhotonState) else state


# ---------------------------------------------------------------------------
# DQC spectral factor


def _narrow_lineshape(shape, lam: complex) -> complex | None:
    """``∫ dx/2π |ψ_N(x)|² / (λ + i x)`` for the named narrow shapes."""
    if isinstance(shape, ExponentialOneSided):
        return 1.0 / (lam + shape.rate)
    if isinstance(shape, GaussianSpectral):
        s = shape.sigma
        return math.sqrt(math.pi / 2) / s * faddeeva(1j * lam / (math.sqrt(2) * s))
    if isinstance(shape, Rectangular):
        T = shape.duration
        return T * _rect_kernel(lam * T)
    return None


def _coherent_closed_factor(phi: SpectralAmplitude, lam: complex) -> complex | None:
    shape = phi.shape
    n2 = phi.norm ** 2
    if isinstance(shape, ExponentialOneSided):
        g = shape.rate
        return n2 * 2 * g / (lam + 2 * g)
    if isinstance(shape, Rectangular):
        return n2 * 2 * _rect_kernel(lam * shape.duration)
    if isinstance(shape, GaussianSpectral):
        return n2 * faddeeva(1j * lam / (2 * shape.sigma))
    return None


def _closed_factor(state, lam: complex) -> complex | None:
    if isinstance(state, CoherentState):
        return _coherent_closed_factor(state.phi, lam)
    jsa = state.jsa
    if isinstance(jsa, Separable):
        return _coherent_closed_factor(jsa.phi0, lam)
    if isinstance(jsa, AntiDiagonalSeparable):
        line = _narrow_lineshape(jsa.narrow, lam)
        if line is None:
            return None
        weight = abs(complex(jsa.broad.envelope(0.0))) ** 2
        return 2.0 * weight * line
    return None


def _grid_factor(kernel: ProjectionKernel, lam: complex) -> complex:
    x = kernel.x
    vals = np.abs(kernel.values) ** 2 / (lam + 1j * x)
    return complex(2.0 * integrate.trapezoid(vals, dx=kernel.spacing) / TWO_PI)


def _kernel(state) -> ProjectionKernel:
    if isinstance(state, CoherentState):
        return k_projection_coherent(state.phi)
    return k_projection_jsa(state.jsa)


def dqc_spectral_factor(state, gamma_fg: float, detuning: float, closed_form: bool = True):
    """``2 ∫ dx/2π |K(x)|² / (γ_fg − iΔ + ix)`` and the method that produced it."""
    state = _prepare(state)
    lam = complex(gamma_fg, -detuning)
    if closed_form:
        value = _closed_factor(state, lam)
        if value is not None:
            return complex(value), "closed-form"
    kernel = _kernel(state)
    if kernel.analytic:
        small, large = _kernel_scales(state)
        grid = np.linspace(-40 * large, 40 * large, 1 + int(80 * large / (small / 8)))
        kernel = ProjectionKernel(kernel.provenance, x=grid, values=kernel(grid))
    return _grid_factor(kernel, lam), "quadrature"


def _kernel_scales(state):
    if isinstance(state, CoherentState):
        w = state.phi.width
        return w, w
    return state.jsa.widths


def _dqc_pair_terms(level, omega0, pref, half_factor):
    r = {}
    raw = 0j
    for e, ep in level.pairs():
        denom = (-level.omega_diff("f", ep) + omega0) * (level.omega_diff(e, "g") - omega0)
        r[(e, ep)] = pref * half_factor / denom
        raw += level.dipole_product(e, ep) * r[(e, ep)]
    return r, raw


def p_dqc(level: LevelSystem, si: SIContext | None, state, detuning: float | None = None,
          guard: float | None = None, closed_form: bool = True) -> PathwayResult:
    """Double-quantum-coherence probability of reaching ``f``.

    ``detuning`` overrides ``ω_fg − 2ω0`` in the two-photon lineshape only; the
    dipole sum always uses the state's carrier.
    """
    omega0 = carrier(state)
    s2 = big_sigma2(level, omega0, guard)
    pref = _prefactor(state, si)
    if isinstance(state, SinglePhotonState) or pref == 0:
        return PathwayResult(method="closed-form", prefactor=pref, dipole_sum=s2, spectral_factor=0j)
    gamma = level.gamma("f", "g")
    delta = level.omega_f - 2 * omega0 if detuning is None else float(detuning)
    factor, method = dqc_spectral_factor(state, gamma, delta, closed_form)
    r, raw = _dqc_pair_terms(level, omega0, pref, 0.5 * factor)
    prob = (pref * s2 * factor).real
    notes = []
    if prob > 0.1:
        notes.append("perturbative-validity")
        warnings.warn(f"two-photon probability {prob:.3g} exceeds 0.1", PerturbativeValidityWarning, stacklevel=2)
    return PathwayResult(method=method, prefactor=pref, dipole_sum=s2, spectral_factor=factor,
                         r_dqc=r, raw_dqc=raw, p_dqc=prob, warnings=tuple(notes))


# ---------------------------------------------------------------------------
# Step-wise pathways


def _coherent_closed_q(phi: SpectralAmplitude, lam: complex) -> complex | None:
    shape = phi.shape
    n2 = phi.norm ** 2
    if isinstance(shape, ExponentialOneSided):
        g = shape.rate
        return n2 * g / (lam + 2 * g)
    if isinstance(shape, Rectangular):
        return n2 * _rect_kernel(lam * shape.duration)
    if isinstance(shape, GaussianSpectral):
        return n2 * 0.5 * faddeeva(1j * lam / (2 * shape.sigma))
    return None


def _broad_closed_q(shape, lam: complex) -> complex | None:
    if isinstance(shape, GaussianSpectral):
        return 0.5 * faddeeva(1j * lam / (2 * math.sqrt(2) * shape.sigma))
    if isinstance(shape, Rectangular):
        return _half_window(lam * shape.duration)
    return None


def autocorrelation(state) -> ProjectionKernel:
    """``G(y) = ∫∫ dω dω̃/4π² ⟨a†(ω−y) a†(ω̃+y) a(ω) a(ω̃)⟩`` on a grid."""
    state = _prepare(state)
    if isinstance(state, CoherentState):
        phi = state.phi
        if isinstance(phi.shape, Sampled):
            grid = phi.shape.grid
            vals = phi.shape.values
        else:
            w = phi.width
            n = 1 + int(160 * w / (w / 16))
            z = np.linspace(-80 * w, 80 * w, n)
            vals = phi.offset(z)
            grid = None
        h = grid.spacing if grid is not None else z[1] - z[0]
        # c(y_k) = Σ_i conj(φ_{i-k}) φ_i h/2π
        corr = np.correlate(vals, vals, mode="full") * h / TWO_PI
        size = vals.size
        y = h * (np.arange(corr.size) - (size - 1))
        return ProjectionKernel("autocorrelation", x=y, values=abs(state.alpha0) ** 4 * np.abs(corr) ** 2 + 0j)
    jsa = state.jsa
    sampled = jsa if isinstance(jsa, Sampled2D) else Sampled2D.from_jsa(jsa, default_joint_grid(jsa))
    h = _equal_spacing(sampled)
    v = sampled.values
    n_a, n_b = v.shape
    shifts = np.arange(-(n_a - 1), n_a)
    out = np.zeros(shifts.size, dtype=complex)
    for idx, k in enumerate(shifts):
        # Σ_ij conj(Ψ[i-k, j+k]) Ψ[i, j]
        i0, i1 = max(k, 0), min(n_a, n_a + k)
        j0, j1 = max(-k, 0), min(n_b, n_b - k)
        if i1 <= i0 or j1 <= j0:
            continue
        a = v[i0 - k:i1 - k, j0 + k:j1 + k]
        b = v[i0:i1, j0:j1]
        out[idx] = np.vdot(a, b)
    out *= 4.0 * state.epsilon ** 2 * (h / TWO_PI) ** 2
    return ProjectionKernel("autocorrelation", x=h * shifts.astype(float), values=out)


def q_ee(level: LevelSystem, pair: tuple[str, str], state, closed_form: bool = True) -> complex:
    """``∫ dy/2π G(y) / (γ_ee′ − i(ω_ee′ + y))`` for one intermediate pair."""
    e, ep = pair
    lam = complex(level.gamma(e, ep), -level.omega_diff(e, ep))
    state = _prepare(state)
    if isinstance(state, SinglePhotonState):
        return 0j
    if closed_form:
        if isinstance(state, CoherentState):
            q = _coherent_closed_q(state.phi, lam)
            if q is not None:
                return complex(abs(state.alpha0) ** 4 * q)
        else:
            jsa = state.jsa
            q = None
            if isinstance(jsa, Separable):
                q = _coherent_closed_q(jsa.phi0, lam)
            elif isinstance(jsa, AntiDiagonalSeparable):
                q = _broad_closed_q(jsa.broad, lam)
            if q is not None:
                return complex(4.0 * state.epsilon ** 2 * q)
    g = autocorrelation(state)
    vals = g.values / (lam - 1j * g.x)
    return complex(integrate.trapezoid(vals, dx=g.spacing) / TWO_PI)


def p_nrp_rp(level: LevelSystem, si: SIContext | None, state, guard: float | None = None,
             closed_form: bool = True) -> PathwayResult:
    """Non-rephasing and rephasing probabilities for real dipole products."""
    omega0 = carrier(state)
    resonance_guard(level, omega0, guard)
    if not check_M_real(level):
        raise ComplexDipoleError("step-wise pathways are implemented for real dipole products only")
    L4 = field_scale(si) ** 4
    pref = _prefactor(state, si)
    r_nrp, r_rp, qs, ratios = {}, {}, {}, {}
    raw_nrp = raw_rp = raw_step = 0j
    notes = []
    method = "closed-form"
    for e, ep in level.pairs():
        q = q_ee(level, (e, ep), state, closed_form)
        absorb = level.omega_diff(e, "g") - omega0
        emit_nrp = -level.omega_diff("f", ep) + omega0
        emit_rp = -level.omega_diff("f", e) + omega0
        nrp = L4 * q / (emit_nrp * absorb)
        rp = -L4 * q / (emit_rp * absorb)
        m = level.dipole_product(e, ep)
        qs[(e, ep)] = q
        r_nrp[(e, ep)] = nrp
        r_rp[(e, ep)] = rp
        raw_nrp += m * nrp
        raw_rp += m * rp
        raw_step += m * (nrp + rp)
        if e != ep:
            ratio = level.omega_diff(e, ep) / emit_rp
            ratios[(e, ep)] = ratio
            if abs(ratio) > 1:
                notes.append("coupling-ratio-above-one")
                warnings.warn(f"|ω_ee′/(ω0 − ω_fe)| = {abs(ratio):.3g} > 1 for pair {e},{ep}",
                              LargeCouplingRatioWarning, stacklevel=2)
    if not closed_form or not _has_closed_q(state):
        method = "quadrature"
    return PathwayResult(
        method=method, prefactor=pref, r_nrp=r_nrp, r_rp=r_rp, q_values=qs,
        raw_nrp=raw_nrp, raw_rp=raw_rp, p_nrp=2 * raw_nrp.real, p_rp=2 * raw_rp.real,
        p_step=2 * raw_step.real, coupling_ratios=ratios, warnings=tuple(dict.fromkeys(notes)),
    )


def _has_closed_q(state) -> bool:
    state = _prepare(state)
    if isinstance(state, CoherentState):
        return isinstance(state.phi.shape, (ExponentialOneSided, Rectangular, GaussianSpectral))
    if isinstance(state, TwoPhotonState):
        jsa = state.jsa
        if isinstance(jsa, Separable):
            return isinstance(jsa.phi0.shape, (ExponentialOneSided, Rectangular, GaussianSpectral))
        if isinstance(jsa, AntiDiagonalSeparable):
            return isinstance(jsa.broad, (GaussianSpectral, Rectangular))
    return True


def compute_pathways(level: LevelSystem, si: SIContext | None, state, detuning: float | None = None,
                     guard: float | None = None, closed_form: bool = True,
                     step_pathways: bool = True) -> PathwayResult:
    """DQC plus (when the dipole products are real) the step-wise pathways."""
    dqc = p_dqc(level, si, state, detuning, guard, closed_form)
    if not step_pathways or isinstance(state, SinglePhotonState):
        return dqc
    return dqc.merge(p_nrp_rp(level, si, state, guard, closed_form))


def pathway_dominance_ratio(level: LevelSystem, si: SIContext | None, epp: TwoPhotonState,
                            guard: float | None = None) -> float:
    """``P_DQC / |P_NRP + P_RP|``; infinite when the step-wise pathways cancel exactly."""
    dqc = p_dqc(level, si, epp, guard=guard).p_dqc
    step = p_nrp_rp(level, si, epp, guard=guard).p_step
    if step == 0:
        return math.inf
    return dqc / abs(step)


# ---------------------------------------------------------------------------
# Rates, cross sections and limits


def photon_flux(power: float, wavelength: float) -> float:
    """Photons per second in a beam of ``power`` watts."""
    return power * wavelength / (constants.h * constants.c)


def detuning_factor(gamma: float, detuning: float) -> float:
    if detuning == 0:
        return 1.0
    return gamma * gamma / (gamma * gamma + detuning * detuning)


def tpa_rate_from_cross_section(sigma2: float, flux_density: float, gamma: float = 1.0,
                                detuning: float = 0.0) -> float:
    """Steady two-photon excitation rate for a constant flux density."""
    return sigma2 * flux_density ** 2 * detuning_factor(gamma, detuning)


def tpa_rate_quasimono(level: LevelSystem, si: SIContext | None, flux_density: float,
                       detuning: float = 0.0, guard: float | None = None) -> float:
    """Rate for a long quasi-monochromatic beam at the carrier of ``si``."""
    from .molecule import sigma2_conventional

    omega0 = si.omega0 if si is not None else 0.5 * level.omega_f
    sigma2 = sigma2_conventional(level, si, omega0, guard).sum_form
    return tpa_rate_from_cross_section(sigma2, flux_density, level.gamma("f", "g"), detuning)


def tpa_probability_slow_envelope(sigma2: float, flux_density, dt: float, gamma: float = 1.0,
                                  detuning: float = 0.0) -> float:
    """Excitation probability for a slowly varying flux density sampled every ``dt``."""
    f = np.asarray(flux_density, dtype=float)
    return sigma2 * detuning_factor(gamma, detuning) * float(integrate.trapezoid(f * f, dx=dt))


def p_dqc_impulsive(level: LevelSystem, si: SIContext | None, envelope, dt: float, omega0: float,
                    guard: float | None = None) -> float:
    """Short-pulse limit ``Σ⁽²⁾ L0⁴ |∫ A(t)² dt|²`` for a sampled envelope.

    The envelope carries the photon-number scale. A warning is issued when the
    pulse bandwidth is below a hundred final-state linewidths.
    """
    a = np.asarray(envelope, dtype=complex)
    s2 = big_sigma2(level, omega0, guard)
    intensity = np.abs(a) ** 2
    t = dt * np.arange(a.size)
    total = intensity.sum()
    if total > 0:
        mean = (t * intensity).sum() / total
        spread = math.sqrt(max(((t - mean) ** 2 * intensity).sum() / total, 0.0))
        bandwidth = 1.0 / (2.0 * spread) if spread > 0 else math.inf
        if bandwidth < 100.0 * level.gamma("f", "g"):
            warnings.warn(f"estimated bandwidth {bandwidth:.3g} is below 100 final-state linewidths",
                          ImpulsiveGuardWarning, stacklevel=2)
    area = complex(integrate.trapezoid(a * a, dx=dt))
    return float((s2 * field_scale(si) ** 4 * abs(area) ** 2).real)


def effective_broad_width(sigma_b: float, dispersion: float) -> float:
    """Broad bandwidth that reproduces a dispersed Gaussian pair's projection."""
    return sigma_b / math.sqrt(1.0 + 16.0 * dispersion ** 2 * sigma_b ** 4)


class QefResult(NamedTuple):
    analytic: float
    computed: float
    ratio: float
    photon_factor: float
    bandwidth_factor: float


def qef(level: LevelSystem, si: SIContext | None, coh: CoherentState, epp: TwoPhotonState,
        guard: float | None = None) -> QefResult:
    """Entangled-to-classical DQC enhancement: order-of-magnitude estimate and exact ratio."""
    shape = coh.phi.shape
    jsa = epp.jsa
    if not isinstance(shape, ExponentialOneSided):
        raise ValueError("coherent pulse must be a one-sided exponential")
    if not (isinstance(jsa, AntiDiagonalSeparable) and isinstance(jsa.narrow, ExponentialOneSided)):
        raise ValueError("pair state must have an exponential narrow factor")
    rate = shape.rate
    if abs(jsa.narrow.rate - rate) > 1e-12 * rate:
        raise ValueError("coherent and pair pulses must share the exponential rate")
    n_coh = abs(coh.alpha0) ** 2
    n_epp = 2 * epp.epsilon ** 2
    if n_coh == 0:
        raise ZeroDivisionError("coherent pulse carries no photons")
    photon = 2 * n_epp / n_coh ** 2
    bandwidth = jsa.broad.width / rate
    analytic = photon * bandwidth
    p_coh = p_dqc(level, si, coh, guard=guard).p_dqc
    if p_coh == 0:
        raise ZeroDivisionError("coherent two-photon probability is zero")
    computed = p_dqc(level, si, epp, guard=guard).p_dqc / p_coh
    return QefResult(analytic, computed, computed / analytic, photon, bandwidth)
