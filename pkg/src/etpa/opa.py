"""One-photon absorption probabilities at second order in the field."""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import PerturbativeValidityWarning
from .fieldstate import (
    TWO_PI,
    CoherentState,
    FrequencyGrid,
    Sampled,
    SIContext,
    SinglePhotonState,
    SpectralAmplitude,
    field_scale,
)
from .molecule import LevelSystem

PERTURBATIVE_LIMIT = 0.1


def lorentzian_response(gamma: float, detuning):
    """Absorption line ``2γ / (γ² + δ²)``."""
    detuning = np.asarray(detuning, dtype=float)
    return 2.0 * gamma / (gamma * gamma + detuning * detuning)


def _integrate_line(fn: Callable, resonance: float, gamma: float, center: float, width: float) -> float:
    """``∫ fn dω/2π`` over the real line, split around the line and the spectrum."""
    scale = max(gamma, width, 1e-300)
    lo = min(resonance, center) - 50.0 * scale
    hi = max(resonance, center) + 50.0 * scale
    marks = {resonance, resonance - gamma, resonance + gamma, center}
    for k in (1.0, 2.0, 4.0, 8.0, 16.0):
        marks.update((center - k * width, center + k * width))
    inner = sorted(marks)
    inner = [p for p in inner if lo < p < hi]
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=500)
    mid, _ = integrate.quad(fn, lo, hi, points=inner or None, **opts)
    left, _ = integrate.quad(fn, -np.inf, lo, **opts)
    right, _ = integrate.quad(fn, hi, np.inf, **opts)
    return (left + mid + right) / TWO_PI


def p_opa_general(
    level: LevelSystem,
    si: SIContext | None,
    spectral_density: Callable,
    *,
    target: str | None = None,
    center: float | None = None,
    width: float = 0.0,
    grid: FrequencyGrid | None = None,
) -> float:
    """Excitation probability of ``target`` for a photon-number spectral density.

    ``center`` and ``width`` locate the density for the adaptive quadrature;
    with ``grid`` the integral is a trapezoid sum on that grid instead.
    """
    e = level.level(target) if target is not None else level.intermediates[0]
    gamma = level.gamma(e.label, "g")
    coupling = field_scale(si) ** 2 * abs(e.mu_ge) ** 2

    def density(w):
        n = spectral_density(w)
        if np.any(np.asarray(n) < 0):
            raise ValueError("spectral photon density must be non-negative")
        return n

    if grid is not None:
        w = grid.points
        vals = lorentzian_response(gamma, e.omega - w) * density(w)
        total = integrate.trapezoid(vals, dx=grid.spacing) / TWO_PI
    else:
        if gamma == 0:
            raise ValueError("zero linewidth requires an explicit frequency grid")
        center = e.omega if center is None else center
        total = _integrate_line(
            lambda w: float(lorentzian_response(gamma, e.omega - w) * density(w)),
            e.omega, gamma, center, width,
        )
    prob = coupling * float(total)
    if prob > PERTURBATIVE_LIMIT:
        warnings.warn(f"one-photon probability {prob:.3g} exceeds {PERTURBATIVE_LIMIT}",
                      PerturbativeValidityWarning, stacklevel=2)
    return prob


def photon_density(phi: SpectralAmplitude, mean_number: float = 1.0) -> Callable:
    """``N |φ(ω)|²`` as a callable."""
    return lambda w: mean_number * np.abs(phi(w)) ** 2


def _density_hints(phi: SpectralAmplitude) -> dict:
    if isinstance(phi.shape, Sampled):
        return {"grid": phi.shape.grid}
    return {"center": phi.omega0, "width": phi.width}


def p_opa_coherent(level: LevelSystem, si: SIContext | None, state: CoherentState,
                   target: str | None = None) -> float:
    n = abs(state.alpha0) ** 2
    return p_opa_general(level, si, photon_density(state.phi, n), target=target, **_density_hints(state.phi))


def p_opa_single_photon(level: LevelSystem, si: SIContext | None, state: SinglePhotonState,
                        target: str | None = None) -> float:
    return p_opa_general(level, si, photon_density(state.phi, 1.0), target=target,
                         **_density_hints(state.phi))


def exponential_on_line(level: LevelSystem, si: SIContext | None, rate: float, target: str | None = None) -> float:
    """Closed form for a resonant one-sided exponential pulse: ``2 L0² |μ|² / (γ + Γ)``."""
    e = level.level(target) if target is not None else level.intermediates[0]
    gamma = level.gamma(e.label, "g")
    return 2.0 * field_scale(si) ** 2 * abs(e.mu_ge) ** 2 / (gamma + rate)

