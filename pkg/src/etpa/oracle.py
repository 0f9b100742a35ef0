"""Independent brute-force validators for the closed-form pathway engine.

Nothing here imports the production formulas in :mod:`etpa.tpa`. The
integrals are evaluated with a small double-exponential quadrature engine
(tanh-sinh on finite pieces, exp-sinh on half lines) whose error estimate is
the change between step ``h`` and ``h/2``.
"""

from __future__ import annotations

import functools
import math
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConvergenceError, SingularityError
from .fieldstate import (
    TWO_PI,
    AntiDiagonalSeparable,
    CoherentState,
    ExponentialOneSided,
    GaussianSpectral,
    Rectangular,
    Sampled,
    Sampled2D,
    SinglePhotonState,
    SIContext,
    TwoPhotonState,
    field_scale,
    symmetric_part,
)
from .molecule import LevelSystem

PATHWAYS = ("DQC", "NRP", "RP")
_TS_TMAX = 4.0
_ES_TMAX = 4.5
_CHUNK = 192
ANALYTIC_TOL = 1e-9
GRID_TOL = 1e-4


class QuadResult(NamedTuple):
    value: complex
    error: float
    method: str


# ---------------------------------------------------------------------------
# Double-exponential rules


@functools.lru_cache(maxsize=None)
def _tanh_sinh(level: int):
    h = 2.0 ** -level
    t = h * np.arange(-math.ceil(_TS_TMAX / h), math.ceil(_TS_TMAX / h) + 1)
    s = 0.5 * math.pi * np.sinh(t)
    return np.tanh(s), h * 0.5 * math.pi * np.cosh(t) / np.cosh(s) ** 2


@functools.lru_cache(maxsize=None)
def _exp_sinh(level: int):
    h = 2.0 ** -level
    t = h * np.arange(-math.ceil(_ES_TMAX / h), math.ceil(_ES_TMAX / h) + 1)
    v = np.exp(0.5 * math.pi * np.sinh(t))
    return v, h * 0.5 * math.pi * np.cosh(t) * v


def _rule(breaks, scale, level: int, left_tail: bool = True, right_tail: bool = True):
    """Nodes and weights covering the breakpoints (last axis) plus optional half-line tails.

    ``breaks`` may carry leading batch dimensions; each row is sorted here.
    """
    b = np.sort(np.asarray(breaks, dtype=float), axis=-1)
    sc = np.broadcast_to(np.asarray(scale, dtype=float), b.shape[:-1])[..., None]
    u, wu = _tanh_sinh(level)
    v, wv = _exp_sinh(level)
    xs, ws = [], []
    if left_tail:
        xs.append(b[..., :1] - sc * v)
        ws.append(np.broadcast_to(sc * wv, xs[-1].shape))
    for i in range(b.shape[-1] - 1):
        lo, hi = b[..., i:i + 1], b[..., i + 1:i + 2]
        half = 0.5 * (hi - lo)
        xs.append(0.5 * (lo + hi) + half * u)
        ws.append(half * wu)
    if right_tail:
        xs.append(b[..., -1:] + sc * v)
        ws.append(np.broadcast_to(sc * wv, xs[-1].shape))
    return np.concatenate(xs, axis=-1), np.concatenate(ws, axis=-1)


def _converge(compute: Callable[[int], complex], tol: float, what: str, start: int = 3,
              max_level: int = 7, abs_floor: float = 0.0) -> tuple[complex, float]:
    prev = compute(start - 1)
    cur, err = prev, math.inf
    for k in range(start, max_level + 1):
        cur = compute(k)
        err = abs(cur - prev)
        if err <= tol * abs(cur) or err <= abs_floor:
            return cur, err
        prev = cur
    raise ConvergenceError(
        f"{what}: error estimate {err:.3e} exceeds tolerance {tol:.1e} * |{abs(cur):.6e}| at level {max_level}",
        value=cur, error=err,
    )


def _chunked_sum(nodes, weights, fn) -> complex:
    """``Σ w·fn(x)`` with the outer nodes processed in blocks to bound memory."""
    total = 0j
    for i in range(0, nodes.size, _CHUNK):
        x = nodes[i:i + _CHUNK]
        total += complex(np.sum(weights[i:i + _CHUNK] * fn(x)))
    return total


def _breaks(*points) -> np.ndarray:
    return np.unique(np.array([p for p in points if math.isfinite(p)], dtype=float))


# ---------------------------------------------------------------------------
# State helpers


def _coherent_parts(state: CoherentState):
    phi = state.phi
    if isinstance(phi.shape, Sampled):
        raise NotImplementedError("oracle quadrature needs an analytic pulse shape")
    return phi.offset, phi.width, abs(state.alpha0) ** 4


def _prefactor(state, si) -> float:
    L4 = field_scale(si) ** 4
    if isinstance(state, CoherentState):
        return abs(state.alpha0) ** 4 * L4
    return 4.0 * state.epsilon ** 2 * L4


def _carrier(state) -> float:
    return state.phi.omega0 if isinstance(state, (CoherentState, SinglePhotonState)) else state.jsa.center


def _far_denominator(level: LevelSystem, pathway: str, pair, omega0: float) -> float:
    e, ep = pair
    absorb = level.omega_diff(e, "g") - omega0
    if pathway == "RP":
        return -((-level.omega_diff("f", e) + omega0) * absorb)
    return (-level.omega_diff("f", ep) + omega0) * absorb


def _time_support(shape):
    if isinstance(shape, Rectangular):
        return -0.5 * shape.duration, 0.5 * shape.duration, shape.duration
    if isinstance(shape, ExponentialOneSided):
        return 0.0, math.inf, 1.0 / shape.rate
    if isinstance(shape, GaussianSpectral):
        return -math.inf, math.inf, 1.0 / shape.sigma
    raise NotImplementedError(f"no time-domain support for {type(shape).__name__}")


# ---------------------------------------------------------------------------
# Frequency-domain far-off integrals


def _projection_integral(amp2: Callable, width: float, lam: complex, delta: float, level: int) -> complex:
    """``∫dx/2π |∫dz/2π amp2(z, x)|² / (λ + ix)`` by nested quadrature."""
    gamma = lam.real
    xb = _breaks(0.0, -2 * width, 2 * width, delta - gamma, delta, delta + gamma)
    x, wx = _rule(xb, max(2 * width, gamma), level)

    def outer(xc):
        zb = np.stack([np.zeros_like(xc), 0.5 * xc, xc], axis=-1)
        z, wz = _rule(zb, width, level)
        k = np.sum(wz * amp2(z, xc[:, None]), axis=-1) / TWO_PI
        return np.abs(k) ** 2 / (lam + 1j * xc)

    return _chunked_sum(x, wx, outer) / TWO_PI


def _autocorrelation_integral(g_of_y: Callable, width: float, lam: complex, level: int) -> complex:
    """``∫dy/2π G(y) / (λ − iy)`` with ``G`` evaluated by inner quadrature."""
    shift = -lam.imag  # λ − iy vanishes near y = −ω_ee′ = Im λ
    gamma = lam.real
    yb = _breaks(0.0, -2 * width, 2 * width, -shift - gamma, -shift, -shift + gamma) if gamma > 0 else \
        _breaks(0.0, -2 * width, 2 * width)
    y, wy = _rule(yb, max(2 * width, gamma), level)
    return _chunked_sum(y, wy, lambda yc: g_of_y(yc, level) / (lam - 1j * yc)) / TWO_PI


def _coherent_g(amp, width):
    def g(yc, level):
        b1 = np.stack([np.zeros_like(yc), yc], axis=-1)
        z1, w1 = _rule(b1, width, level)
        c1 = np.sum(w1 * np.conj(amp(z1 - yc[:, None])) * amp(z1), axis=-1) / TWO_PI
        b2 = np.stack([np.zeros_like(yc), -yc], axis=-1)
        z2, w2 = _rule(b2, width, level)
        c2 = np.sum(w2 * np.conj(amp(z2 + yc[:, None])) * amp(z2), axis=-1) / TWO_PI
        return c1 * c2
    return g


def _antidiagonal_g(jsa: AntiDiagonalSeparable):
    narrow, broad = jsa.narrow, jsa.broad

    def g(yc, level):
        vb = np.zeros((1, 1))
        v, wv = _rule(vb, narrow.width, level)
        norm_n = np.sum(wv * np.abs(narrow.spectrum(v)) ** 2) / TWO_PI
        ub = np.stack([np.zeros_like(yc), yc], axis=-1)
        u, wu = _rule(ub, broad.width, level)
        corr = np.sum(wu * np.conj(broad.spectrum(u - yc[:, None])) * broad.spectrum(u), axis=-1) / TWO_PI
        return norm_n * corr
    return g


def _far_off_frequency(level, state, pathway, pair, lam_dqc, tol):
    if isinstance(state, CoherentState):
        amp, width, _ = _coherent_parts(state)
        if pathway == "DQC":
            def compute(k):
                return _projection_integral(lambda z, x: amp(z) * amp(x - z), width, lam_dqc, -lam_dqc.imag, k)
        else:
            lam = _pair_rate(level, pair)
            g = _coherent_g(amp, width)

            def compute(k):
                return _autocorrelation_integral(g, width, lam, k)
        return _converge(compute, tol, f"{pathway} frequency-domain quadrature")
    jsa = state.jsa
    c = jsa.center
    small, large = jsa.widths
    if pathway == "DQC":
        def amp2(z, x):
            return symmetric_part(jsa, c + z, c + x - z)

        def compute(k):
            return _projection_integral(amp2, large, lam_dqc, -lam_dqc.imag, k)
        # narrow features in x need their own breakpoints
        def compute_x(k):
            return _projection_integral_narrow(amp2, small, large, lam_dqc, k)
        return _converge(compute_x, tol, "DQC pair quadrature")
    if isinstance(jsa, AntiDiagonalSeparable):
        lam = _pair_rate(level, pair)
        g = _antidiagonal_g(jsa)
        return _converge(lambda k: _autocorrelation_integral(g, large, lam, k), tol,
                         f"{pathway} pair quadrature")
    raise NotImplementedError("step-wise oracle supports coherent and anti-diagonal pair states")


def _projection_integral_narrow(amp2, small, large, lam, level):
    """Projection integral for JSAs whose pair-sum spread ``small`` is below the difference spread."""
    gamma = lam.real
    delta = -lam.imag
    xb = _breaks(0.0, -2 * small, 2 * small, delta - gamma, delta, delta + gamma)
    x, wx = _rule(xb, max(2 * small, gamma), level)

    def outer(xc):
        zb = np.stack([0.5 * xc - large, 0.5 * xc, 0.5 * xc + large], axis=-1)
        z, wz = _rule(zb, large, level)
        k = np.sum(wz * amp2(z, xc[:, None]), axis=-1) / TWO_PI
        return np.abs(k) ** 2 / (lam + 1j * xc)

    return _chunked_sum(x, wx, outer) / TWO_PI


def _pair_rate(level: LevelSystem, pair) -> complex:
    e, ep = pair
    gamma = level.gamma(e, ep)
    if gamma == 0:
        raise SingularityError(f"undamped coherence {e},{ep}: the step-wise integrand has a pole on the real axis")
    return complex(gamma, -level.omega_diff(e, ep))


# ---------------------------------------------------------------------------
# Sampled JSAs: anti-diagonal grid sums


def _antidiagonal_profile(values: np.ndarray, h: float, x0: float, edge_rel: float = 1e-6):
    """Anti-diagonal sums ``K(x_m)`` and the contiguous range where each sum is complete.

    A sum counts as complete when the matrix entries at both ends of its
    anti-diagonal are negligible, i.e. the grid boundary does not cut it.
    """
    n_a, n_b = values.shape
    flipped = values[:, ::-1]
    offsets = range(n_b - 1, -n_a, -1)
    sums = np.empty(n_a + n_b - 1, dtype=complex)
    edges = np.empty(n_a + n_b - 1)
    for m, o in enumerate(offsets):
        diag = np.diagonal(flipped, offset=o)
        sums[m] = math.fsum(diag.real) + 1j * math.fsum(diag.imag)
        edges[m] = max(abs(diag[0]), abs(diag[-1]))
    sums *= h / TWO_PI
    x = x0 + h * np.arange(sums.size)
    ok = edges <= edge_rel * float(np.max(np.abs(values)))
    peak = int(np.argmax(np.abs(sums) * ok))
    lo = peak
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = peak
    while hi < ok.size - 1 and ok[hi + 1]:
        hi += 1
    return x[lo:hi + 1], sums[lo:hi + 1]


def _pole_breaks(lo: float, hi: float, lam: complex) -> list[float]:
    centre, gamma = -lam.imag, lam.real
    pts = []
    if gamma > 0:
        step = gamma / 8
        while step < hi - lo:
            pts += [centre - step, centre + step]
            step *= 2
        pts.append(centre)
    return [p for p in pts if lo < p < hi]


def _power_tail(x_edge: float, value: float, exponent: float, lam: complex, level: int = 6) -> complex:
    """``∫ value (x/x_edge)^−p / (λ + ix) dx/2π`` from ``x_edge`` outward."""
    sign = 1.0 if x_edge > 0 else -1.0
    a = abs(x_edge)
    v, wv = _exp_sinh(level)
    x = sign * (a + a * v)
    f = value * (np.abs(x) / a) ** (-exponent) / (lam + 1j * x)
    return complex(np.sum(a * wv * f)) / TWO_PI


def _sampled_projection_factor(jsa: Sampled2D, lam: complex, step: int) -> complex:
    """``∫dx/2π |K|² / (λ + ix)`` from anti-diagonal sums of a tabulated JSA.

    ``|K|²`` is interpolated by a cubic spline and integrated against the
    resonance with Gauss-Legendre panels refined geometrically towards the
    pole. Algebraic tails cut off by the grid are extended with a power law
    fitted to the last complete samples.
    """
    from numpy.polynomial.legendre import leggauss
    from scipy.interpolate import CubicSpline

    vals = jsa.values if jsa.symmetric else 0.5 * (jsa.values + jsa.values.T)
    sub = vals[::step, ::step]
    h = jsa.grid_a.spacing * step
    if abs(jsa.grid_b.spacing * step - h) > 1e-12 * h:
        raise ValueError("sampled JSA needs equal spacing on both axes")
    c = jsa.center
    x0 = (jsa.grid_a.points[0] - c) + (jsa.grid_b.points[0] - c)
    x, k = _antidiagonal_profile(sub, h, x0)
    if x.size < 8:
        raise ConvergenceError("sampled JSA has too few complete anti-diagonals", value=0j, error=math.inf)
    dens = np.abs(k) ** 2
    spline = CubicSpline(x, dens)
    cuts = np.unique(np.concatenate([x, _pole_breaks(x[0], x[-1], lam)]))
    nodes, weights = leggauss(10)
    a, b = cuts[:-1, None], cuts[1:, None]
    xs = 0.5 * (a + b) + 0.5 * (b - a) * nodes
    ws = 0.5 * (b - a) * weights
    total = complex(np.sum(ws * spline(xs) / (lam + 1j * xs))) / TWO_PI
    peak = float(np.max(dens))
    for side in (0, -1):
        edge = dens[side]
        if edge <= 1e-13 * peak:
            continue
        target = 0.75 * abs(x[side])
        inner = int(np.argmin(np.abs(np.abs(x) - target) + 1e300 * (np.sign(x) != np.sign(x[side]))))
        ratio = dens[inner] / edge
        exponent = math.log(ratio) / math.log(abs(x[side]) / abs(x[inner]))
        if exponent <= 1.0 or abs(x[inner]) >= abs(x[side]):
            raise ConvergenceError("sampled projection tail does not decay fast enough", value=total,
                                   error=math.inf)
        total += _power_tail(x[side], edge, exponent, lam)
    return total


# ---------------------------------------------------------------------------
# Time-domain far-off integrals


def _lag_rule(lam: complex, tscale: float, span: float, level: int, max_pieces: int = 400):
    """Nodes on ``[0, span]`` for an ``e^{−λs}`` kernel.

    The axis is cut into pieces a few oscillation periods long up to the
    point where the damping has decayed by ``e^{−40}``, then closed with a tail.
    """
    gamma, freq = lam.real, abs(lam.imag)
    reach = span
    if gamma > 0:
        reach = min(span, 40.0 / gamma + 8.0 * tscale)
    marks = [0.0, tscale] + ([1.0 / gamma, 4.0 / gamma] if gamma > 0 else [])
    if freq > 0 and math.isfinite(reach):
        piece = max(4.0 * TWO_PI / freq, reach / max_pieces)
        marks += list(np.arange(piece, reach, piece))
    if math.isfinite(reach):
        marks.append(reach)
    sb = _breaks(*(m for m in marks if m <= reach))
    tail = reach < span
    scale = max(tscale, 1.0 / gamma) if gamma > 0 else tscale
    return _rule(sb, scale, level, left_tail=False, right_tail=tail)


def _time_projection(two_time: Callable, lo: float, hi: float, tscale: float, lam: complex, level: int) -> complex:
    """``∫_0^∞ ds e^{−λs} ∫dt conj(F(t)) F(t+s)`` where ``F(t)`` is the equal-time amplitude."""
    finite = math.isfinite(lo) and math.isfinite(hi)
    s, ws = _lag_rule(lam, tscale, hi - lo if finite else math.inf, level)

    def outer(sc):
        if finite:
            tb = np.stack([np.full_like(sc, lo), np.maximum(hi - sc, lo)], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False, right_tail=False)
        elif math.isfinite(lo):
            tb = np.stack([np.full_like(sc, lo), np.full_like(sc, lo + tscale)], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False)
        else:
            tb = np.stack([-sc, -0.5 * sc, np.zeros_like(sc)], axis=-1)
            t, wt = _rule(tb, tscale, level)
        inner = np.sum(wt * np.conj(two_time(t)) * two_time(t + sc[:, None]), axis=-1)
        return np.exp(-lam * sc) * inner

    return _chunked_sum(s, ws, outer)


def _time_autocorrelation(abs2: Callable, lo: float, hi: float, tscale: float, lam: complex, level: int) -> complex:
    """``∫_0^∞ ds e^{−λs} ∫dt |F(t−s, t)|²`` with ``abs2(t, s) = |F(t−s, t)|²``."""
    finite = math.isfinite(lo) and math.isfinite(hi)
    s, ws = _lag_rule(lam, tscale, hi - lo if finite else math.inf, level)

    def outer(sc):
        if finite:
            tb = np.stack([np.minimum(lo + sc, hi), np.full_like(sc, hi)], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False, right_tail=False)
        elif math.isfinite(lo):
            tb = np.stack([lo + sc, lo + sc + tscale], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False)
        else:
            tb = np.stack([np.zeros_like(sc), 0.5 * sc, sc], axis=-1)
            t, wt = _rule(tb, tscale, level)
        inner = np.sum(wt * abs2(t, sc[:, None]), axis=-1)
        return np.exp(-lam * sc) * inner

    return _chunked_sum(s, ws, outer)


def _far_off_time(level, state, pathway, pair, lam_dqc, tol):
    if isinstance(state, CoherentState):
        shape = state.phi.shape
        lo, hi, tscale = _time_support(shape)
        env = state.phi.envelope
        if pathway == "DQC":
            def compute(k):
                return _time_projection(lambda t: env(t) ** 2, lo, hi, tscale, lam_dqc, k)
        else:
            lam = _pair_rate(level, pair)

            def compute(k):
                return _time_autocorrelation(lambda t, s: np.abs(env(t - s)) ** 2 * np.abs(env(t)) ** 2,
                                             lo, hi, tscale, lam, k)
        return _converge(compute, tol, f"{pathway} time-domain quadrature")
    jsa = state.jsa
    if not isinstance(jsa, AntiDiagonalSeparable):
        raise NotImplementedError("time-domain oracle supports coherent and anti-diagonal pair states")
    lo, hi, tscale = _time_support(jsa.narrow)
    narrow_env, broad_env = jsa.narrow.envelope, jsa.broad.envelope
    if pathway == "DQC":
        weight = broad_env(0.0)

        def compute(k):
            return _time_projection(lambda t: narrow_env(t) * weight, lo, hi, tscale, lam_dqc, k)
        return _converge(compute, tol, "DQC time-domain quadrature")
    lam = _pair_rate(level, pair)
    blo, bhi, bscale = _time_support(jsa.broad)

    def abs2(t, s):
        return np.abs(narrow_env(t - 0.5 * s)) ** 2 * np.abs(broad_env(-s)) ** 2

    def compute(k):
        # the time variable enters only through the narrow factor centred at s/2
        shifted_lo = lo
        return _time_autocorrelation_shifted(abs2, shifted_lo, hi, tscale, bhi - blo, bscale, lam, k)
    return _converge(compute, tol, f"{pathway} time-domain quadrature")


def _time_autocorrelation_shifted(abs2, lo, hi, tscale, s_span, s_scale, lam, level):
    s, ws = _lag_rule(lam, s_scale, s_span, level)

    def outer(sc):
        centre = 0.5 * sc
        if math.isfinite(lo) and math.isfinite(hi):
            tb = np.stack([centre + lo, centre + hi], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False, right_tail=False)
        elif math.isfinite(lo):
            tb = np.stack([centre + lo, centre + lo + tscale], axis=-1)
            t, wt = _rule(tb, tscale, level, left_tail=False)
        else:
            tb = centre[:, None]
            t, wt = _rule(tb, tscale, level)
        inner = np.sum(wt * abs2(t, sc[:, None]), axis=-1)
        return np.exp(-lam * sc) * inner

    return _chunked_sum(s, ws, outer)


# ---------------------------------------------------------------------------
# Full resonant denominators (coherent pulses)


def _full_coherent(level, state, pathway, pair, omega0, tol):
    amp, width, _ = _coherent_parts(state)
    e, ep = pair
    g_fe1 = complex(level.gamma("f", ep), -level.omega_diff("f", ep))
    g_fg = complex(level.gamma("f", "g"), -level.omega_f)
    g_eg = complex(level.gamma(e, "g"), -level.omega_diff(e, "g"))
    g_ee = complex(level.gamma(e, ep), -level.omega_diff(e, ep))
    g_fe_rp = complex(level.gamma("f", e), level.omega_diff("f", e))

    def d1(zt):
        return g_fe1 + 1j * (omega0 + zt)

    def d3(zp):
        return g_eg + 1j * (omega0 + zp)

    if pathway == "DQC":
        def compute(k):
            xb = _breaks(0.0, -2 * width, 2 * width, level.omega_f - 2 * omega0)
            x, wx = _rule(xb, max(2 * width, g_fg.real), k)

            def outer(xc):
                zb = np.stack([np.zeros_like(xc), 0.5 * xc, xc], axis=-1)
                z, wz = _rule(zb, width, k)
                xcol = xc[:, None]
                emit = np.sum(wz * np.conj(amp(z) * amp(xcol - z)) / d3(z), axis=-1) / TWO_PI
                absorb = np.sum(wz * amp(xcol - z) * amp(z) / d1(z), axis=-1) / TWO_PI
                return emit * absorb / (g_fg + 1j * (2 * omega0 + xc))

            return _chunked_sum(x, wx, outer) / TWO_PI
        return _converge(compute, tol, "full DQC quadrature", max_level=6)

    if g_ee.real <= 0:
        raise SingularityError("undamped intermediate coherence puts a pole on the integration axis")

    def first(zt):
        if pathway == "RP":
            return g_fe_rp - 1j * (omega0 + zt)
        return d1(zt)

    def compute(k):
        # d = ω − ω′; the integrand separates into J(d) I(d) / (λ_ee′ − i d)
        db = _breaks(0.0, -2 * width, 2 * width, level.omega_diff(ep, e))
        d, wd = _rule(db, max(2 * width, g_ee.real), k)

        def outer(dc):
            dcol = dc[:, None]
            zb = np.stack([np.zeros_like(dc), -dc], axis=-1)
            zp, wp = _rule(zb, width, k)
            jd = np.sum(wp * np.conj(amp(zp)) * amp(zp + dcol) / d3(zp), axis=-1) / TWO_PI
            zt, wt = _rule(zb, width, k)
            idd = np.sum(wt * np.conj(amp(zt + dcol)) * amp(zt) / first(zt), axis=-1) / TWO_PI
            return jd * idd / (g_ee - 1j * dc)

        return _chunked_sum(d, wd, outer) / TWO_PI
    return _converge(compute, tol, f"full {pathway} quadrature", max_level=6)


# ---------------------------------------------------------------------------
# Public entry points


def quadrature_r(level: LevelSystem, state, pathway: str, pair, mode: str = "far-off", tol: float | None = None,
                 si: SIContext | None = None, detuning: float | None = None) -> QuadResult:
    """Pathway integral ``R_{e,e′}`` including the field prefactor.

    ``mode="far-off"`` integrates the reduced expressions with constant
    intermediate denominators; ``mode="full"`` keeps every resonant
    denominator (coherent analytic pulses only). Rectangular pulses are
    integrated in the time domain because their sinc spectra decay too slowly
    for frequency nodes.
    """
    pathway = pathway.upper()
    if pathway not in PATHWAYS:
        raise ValueError(f"unknown pathway {pathway!r}")
    if isinstance(state, SinglePhotonState):
        return QuadResult(0j, 0.0, "exact")
    gridded = isinstance(state, TwoPhotonState) and isinstance(state.jsa, Sampled2D)
    if tol is None:
        tol = GRID_TOL if gridded else ANALYTIC_TOL
    omega0 = _carrier(state)
    pref = _prefactor(state, si)
    if mode == "full":
        if not isinstance(state, CoherentState):
            raise NotImplementedError("full-denominator oracle supports coherent pulses")
        if isinstance(state.phi.shape, Rectangular):
            raise NotImplementedError("full-denominator oracle needs a smooth spectrum")
        value, err = _full_coherent(level, state, pathway, pair, omega0, tol)
        scale = pref
        return QuadResult(scale * value, scale * err, "frequency-full")
    if mode != "far-off":
        raise ValueError(f"unknown mode {mode!r}")
    delta = level.omega_f - 2 * omega0 if detuning is None else float(detuning)
    lam = complex(level.gamma("f", "g"), -delta)
    denom = _far_denominator(level, pathway, pair, omega0)
    if gridded:
        if pathway != "DQC":
            raise NotImplementedError("sampled JSAs are supported for the DQC pathway")
        fine = _sampled_projection_factor(state.jsa, lam, 1)
        coarse = _sampled_projection_factor(state.jsa, lam, 2)
        err = abs(fine - coarse)
        if err > tol * abs(fine):
            raise ConvergenceError(f"sampled projection: grid estimate {err:.3e} above tolerance",
                                   value=fine, error=err)
        return QuadResult(pref * fine / denom, abs(pref * err / denom), "grid")
    uses_time = isinstance(state, CoherentState) and isinstance(state.phi.shape, Rectangular)
    if isinstance(state, TwoPhotonState) and isinstance(state.jsa, AntiDiagonalSeparable):
        uses_time = isinstance(state.jsa.narrow, Rectangular) or isinstance(state.jsa.broad, Rectangular)
    if uses_time:
        value, err = _far_off_time(level, state, pathway, pair, lam, tol)
        method = "time-domain"
    else:
        value, err = _far_off_frequency(level, state, pathway, pair, lam, tol)
        method = "frequency"
    return QuadResult(pref * value / denom, abs(pref * err / denom), method)


def time_domain_r(level: LevelSystem, state, pathway: str, pair, tol: float = 1e-9,
                  si: SIContext | None = None, detuning: float | None = None) -> QuadResult:
    """Far-off pathway integral from the difference-time representation."""
    pathway = pathway.upper()
    if pathway not in PATHWAYS:
        raise ValueError(f"unknown pathway {pathway!r}")
    if isinstance(state, SinglePhotonState):
        return QuadResult(0j, 0.0, "exact")
    omega0 = _carrier(state)
    pref = _prefactor(state, si)
    if pref == 0:
        return QuadResult(0j, 0.0, "exact")
    delta = level.omega_f - 2 * omega0 if detuning is None else float(detuning)
    lam = complex(level.gamma("f", "g"), -delta)
    denom = _far_denominator(level, pathway, pair, omega0)
    value, err = _far_off_time(level, state, pathway, pair, lam, tol)
    return QuadResult(pref * value / denom, abs(pref * err / denom), "time-domain")


def opa_time_domain(level: LevelSystem, si: SIContext | None, state: CoherentState, target: str | None = None,
                    tol: float = 1e-10) -> float:
    """One-photon probability from the double time integral over the pulse envelope."""
    e = level.level(target) if target is not None else level.intermediates[0]
    lam = complex(level.gamma(e.label, "g"), -(e.omega - state.phi.omega0))
    coupling = field_scale(si) ** 2 * abs(e.mu_ge) ** 2 * abs(state.alpha0) ** 2
    if coupling == 0:
        return 0.0
    lo, hi, tscale = _time_support(state.phi.shape)
    env = state.phi.envelope

    def compute(k):
        return _time_projection(env, lo, hi, tscale, lam, k)

    value, _ = _converge(compute, tol, "one-photon time-domain quadrature")
    # the τ-integral of A*(t−τ)A(t) equals the s-integral of conj(A(t))A(t+s)
    return float(2.0 * coupling * value.real)


def induced_dipole_time_domain(level: LevelSystem, si: SIContext | None, envelope: Callable, omega0: float,
                               t: float, tol: float = 1e-10) -> complex:
    """Dipole envelope from the memory integral over the drive history up to ``t``."""
    hbar = 1.0 if si is None else si.hbar
    L0 = field_scale(si)
    total = 0j
    for e in level.intermediates:
        lam = complex(level.gamma(e.label, "g"), -(e.omega - omega0))
        if lam.real <= 0:
            raise ValueError("memory integral needs positive damping")

        def compute(k, lam=lam):
            tau, w = _lag_rule(lam, 1.0 / lam.real, math.inf, k)
            return complex(np.sum(w * np.exp(-lam * tau) * np.conj(envelope(t - tau))))

        value, _ = _converge(compute, tol, "dipole memory integral")
        total += abs(e.mu_ge) ** 2 * value
    return complex(hbar * L0 * total / 1j)


# ---------------------------------------------------------------------------
# Stochastic dephasing and Fourier identities


class KuboSample(NamedTuple):
    mean: complex
    stderr: float
    phase_variance: float


def kubo_monte_carlo(gamma: float, t: float, trajectories: int = 100_000, seed: int = 0,
                     steps: int = 1000, chunk: int = 5000) -> KuboSample:
    """Average of ``exp(−iφ(t))`` over random-walk phases with variance ``2γt``."""
    if trajectories < 1000:
        raise ValueError("at least 1000 trajectories are required")
    if gamma < 0 or t < 0:
        raise ValueError("rate and duration must be non-negative")
    if t == 0 or gamma == 0:
        return KuboSample(1 + 0j, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    step_sd = math.sqrt(2.0 * gamma * t / steps)
    sums_re, sums_im, sq_re, sq_im, phase_sq, phase_sum = [], [], [], [], [], []
    done = 0
    while done < trajectories:
        n = min(chunk, trajectories - done)
        phase = rng.normal(0.0, step_sd, size=(n, steps)).sum(axis=1)
        c, s = np.cos(phase), -np.sin(phase)
        sums_re.append(math.fsum(c))
        sums_im.append(math.fsum(s))
        sq_re.append(math.fsum(c * c))
        sq_im.append(math.fsum(s * s))
        phase_sum.append(math.fsum(phase))
        phase_sq.append(math.fsum(phase * phase))
        done += n
    n = float(trajectories)
    mean_re, mean_im = math.fsum(sums_re) / n, math.fsum(sums_im) / n
    var_re = (math.fsum(sq_re) / n - mean_re ** 2) * n / (n - 1)
    var_im = (math.fsum(sq_im) / n - mean_im ** 2) * n / (n - 1)
    mean_phase = math.fsum(phase_sum) / n
    phase_var = (math.fsum(phase_sq) / n - mean_phase ** 2) * n / (n - 1)
    return KuboSample(complex(mean_re, mean_im), math.sqrt((var_re + var_im) / n), phase_var)


class FourierCheck(NamedTuple):
    time_side: float
    frequency_side: float
    residual: float


def fourier_relation_check(envelope, dt: float, block: int = 256) -> FourierCheck:
    """Compare ``∫|A|⁴ dt`` with the triple spectral sum of the discrete spectrum.

    The envelope is zero-padded to at least twice its length so that the
    circular spectral convolution equals the linear one.
    """
    a = np.asarray(envelope, dtype=complex)
    n = a.size
    m = 1 << max(1, int(math.ceil(math.log2(2 * n))))
    padded = np.zeros(m, dtype=complex)
    padded[:n] = a
    alpha = dt * np.fft.ifft(padded) * m  # Σ A_n e^{+iω_k t_n} Δt
    d_omega = TWO_PI / (m * dt)
    lhs = float(dt * np.sum(np.abs(a) ** 4))
    idx = np.arange(m)
    total = 0.0
    for start in range(0, m, block):
        xs = np.arange(start, min(start + block, m))
        partner = alpha[(xs[:, None] - idx[None, :]) % m]
        k = (d_omega / TWO_PI) * np.sum(alpha[None, :] * partner, axis=1)
        total += float(np.sum(np.abs(k) ** 2))
    rhs = (d_omega / TWO_PI) * total
    scale = max(abs(lhs), abs(rhs))
    residual = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    return FourierCheck(lhs, rhs, residual)
