"""Shipped fixtures and the closed-form versus oracle check suite behind ``tpa validate``."""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import oracle, tpa
from .fieldstate import (
    AntiDiagonalSeparable,
    CoherentState,
    ExponentialOneSided,
    FrequencyGrid,
    GaussianSpectral,
    Rectangular,
    Sampled2D,
    SpectralAmplitude,
    TwoPhotonState,
)
from .molecule import Intermediate, LevelSystem, build_symmetric_nmer
from .opa import p_opa_coherent

REPORT_VERSION = 1
CARRIER = 1000.0


def two_level_fixture(gamma_fg: float = 3.0) -> LevelSystem:
    """Two far-detuned intermediates with real dipoles and finite linewidths everywhere."""
    return LevelSystem(
        2000.0,
        (Intermediate("e1", 1500.0, 1.0, 1.0), Intermediate("e2", 1600.0, 0.8, 1.2)),
        {("f", "g"): gamma_fg, ("e1", "e2"): 2.0, ("e1", "g"): 1.5, ("e2", "g"): 1.5,
         ("f", "e1"): 1.5, ("f", "e2"): 1.5},
    )


def coherent_fixture(shape, n: float = 1.0, omega0: float = CARRIER) -> CoherentState:
    return CoherentState(math.sqrt(n), SpectralAmplitude(shape, omega0))


def pair_fixture(narrow, broad_sigma: float, epsilon: float = 0.1, pump: float = 2 * CARRIER) -> TwoPhotonState:
    return TwoPhotonState(epsilon, AntiDiagonalSeparable(narrow, GaussianSpectral(broad_sigma), pump))


def sampled_pair(state: TwoPhotonState, spacing: float, half_width: float) -> TwoPhotonState:
    n = int(round(2 * half_width / spacing)) + 1
    grid = FrequencyGrid.uniform(state.jsa.center, half_width, n)
    return TwoPhotonState(state.epsilon, Sampled2D.from_jsa(state.jsa, grid))


def worked_example_rate() -> float:
    """Rate for 1 GM, 1 W at 800 nm focused to 5 μm²."""
    flux = tpa.photon_flux(1.0, 800e-9)
    return tpa.tpa_rate_from_cross_section(1e-58, flux / 5e-12)


# ---------------------------------------------------------------------------


def _relative(a, b) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def _check(name, computed, target, error, tolerance, measure):
    def num(v):
        v = complex(v)
        return v.real if v.imag == 0 else {"re": v.real, "im": v.imag}

    return {
        "name": name,
        "computed": num(computed),
        "target": num(target),
        "measure": measure,
        "error": float(error),
        "tolerance": float(tolerance),
        "margin": float(tolerance - error),
        "passed": bool(error <= tolerance),
    }


def _pathway_checks(level, tol):
    out = []
    pair = ("e1", "e2")
    shapes = (("exponential", ExponentialOneSided(1.0)), ("gaussian", GaussianSpectral(1.0)),
              ("rectangular", Rectangular(2.0)))
    for label, shape in shapes:
        state = coherent_fixture(shape)
        closed = tpa.p_dqc(level, None, state, detuning=3.0).r_dqc[pair]
        quad = oracle.quadrature_r(level, state, "DQC", pair, detuning=3.0)
        out.append(_check(f"dqc_{label}_coherent", quad.value, closed, _relative(quad.value, closed),
                          tol(1e-6), "relative"))
    state = coherent_fixture(ExponentialOneSided(1.0))
    step = tpa.p_nrp_rp(level, None, state)
    for pathway, table in (("NRP", step.r_nrp), ("RP", step.r_rp)):
        quad = oracle.quadrature_r(level, state, pathway, pair)
        out.append(_check(f"{pathway.lower()}_exponential_coherent", quad.value, table[pair],
                          _relative(quad.value, table[pair]), tol(1e-6), "relative"))
        timed = oracle.time_domain_r(level, state, pathway, pair)
        out.append(_check(f"{pathway.lower()}_time_vs_frequency", timed.value, quad.value,
                          _relative(timed.value, quad.value), tol(1e-5), "relative"))
    pair_state = pair_fixture(GaussianSpectral(1.0), 5.0)
    closed = tpa.p_dqc(level, None, pair_state, detuning=3.0).r_dqc[pair]
    gridded = sampled_pair(pair_state, 0.1, 50.0)
    quad = oracle.quadrature_r(level, gridded, "DQC", pair, detuning=3.0)
    out.append(_check("dqc_gaussian_pair_sampled", quad.value, closed, _relative(quad.value, closed),
                      tol(1e-5), "relative"))
    return out


def run_checks(tol_override: float | None = None, seed: int = 20240101) -> dict:
    def tol(default):
        return default if tol_override is None else tol_override

    checks = []
    rate = worked_example_rate()
    checks.append(_check("worked_example_rate", rate, 64.0, _relative(rate, 64.0), tol(0.02), "relative"))
    level = two_level_fixture()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        checks.extend(_pathway_checks(level, tol))
        state = coherent_fixture(ExponentialOneSided(1.0), n=0.01)
        freq = p_opa_coherent(level, None, state)
        timed = oracle.opa_time_domain(level, None, state)
        checks.append(_check("opa_time_vs_frequency", timed, freq, _relative(timed, freq), tol(1e-6), "relative"))
    kubo = oracle.kubo_monte_carlo(1.0, 1.0, trajectories=100_000, seed=seed)
    target = math.exp(-1.0)
    checks.append(_check("kubo_mean", kubo.mean, target, abs(kubo.mean - target) / kubo.stderr, tol(3.0),
                         "standard_errors"))
    checks.append(_check("kubo_phase_variance", kubo.phase_variance, 2.0,
                         _relative(kubo.phase_variance, 2.0), tol(0.05), "relative"))
    t = np.linspace(-8.0, 8.0, 1025)
    fourier = oracle.fourier_relation_check(np.exp(-t * t), t[1] - t[0])
    checks.append(_check("fourier_identity_gaussian", fourier.frequency_side, fourier.time_side,
                         fourier.residual, tol(1e-8), "relative"))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        q, r = np.linalg.qr(z)
        u = q * (np.diag(r) / np.abs(np.diag(r)))
        nmer = build_symmetric_nmer(1.0 + 0.3j, 0.7 - 0.2j, u, [1500, 1510, 1520, 1530], 3000.0)
        for e, ep in nmer.pairs():
            m = nmer.dipole_product(e, ep)
            if abs(m) > 0:
                worst = max(worst, abs(m.imag) / abs(m))
    checks.append(_check("nmer_dipole_products_real", worst, 0.0, worst, tol(1e-12), "relative"))
    return {
        "version": REPORT_VERSION,
        "seed": seed,
        "tolerance_override": tol_override,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
