"""Molecular level structure, dipole products, dephasing and conventional cross sections.

Dipoles are stored as ``μ = d/ħ``. ``mu_ge`` is ``⟨g|μ|e⟩`` and ``mu_ef`` is
``⟨e|μ|f⟩``; the reversed elements are their complex conjugates. The ground
state sits at frequency zero and the labels ``"g"`` and ``"f"`` are reserved.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np

from .errors import DomainError, NearResonanceError, SingularityError
from .fieldstate import SIContext, field_scale

RESERVED = ("g", "f")
SCHEMA_VERSION = 1
DEFAULT_GUARD_FACTOR = 10.0


@dataclass(frozen=True)
class Intermediate:
    label: str
    omega: float
    mu_ge: complex
    mu_ef: complex

    def __post_init__(self):
        if self.label in RESERVED:
            raise ValueError(f"label {self.label!r} is reserved")
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "mu_ge", complex(self.mu_ge))
        object.__setattr__(self, "mu_ef", complex(self.mu_ef))


def _pair_key(i: str, j: str) -> frozenset:
    return frozenset((i, j))


@dataclass(frozen=True)
class LevelSystem:
    """Ground state ``g``, intermediate manifold ``{e}`` and final state ``f``.

    ``dephasing`` maps unordered level pairs to pure dephasing rates; pairs
    that are not listed dephase at rate zero. ``population_decay`` maps level
    labels to lifetime decay rates.
    """

    omega_f: float
    intermediates: tuple[Intermediate, ...]
    dephasing: Mapping = field(default_factory=dict)
    population_decay: Mapping = field(default_factory=dict)

    def __post_init__(self):
        inter = tuple(self.intermediates)
        if not inter:
            raise ValueError("at least one intermediate state is required")
        if not self.omega_f > 0:
            raise ValueError("omega_f must be positive")
        labels = [e.label for e in inter]
        if len(set(labels)) != len(labels):
            raise ValueError("intermediate labels must be unique")
        known = set(labels) | set(RESERVED)
        rates = {}
        for key, rate in dict(self.dephasing).items():
            i, j = key.split(",") if isinstance(key, str) else key
            i, j = i.strip(), j.strip()
            if i == j or not {i, j} <= known:
                raise ValueError(f"bad dephasing pair {key!r}")
            rate = float(rate)
            k = _pair_key(i, j)
            if rate < 0:
                raise ValueError("dephasing rates must be non-negative")
            if k in rates and rates[k] != rate:
                raise ValueError(f"conflicting rates for pair {i},{j}")
            rates[k] = rate
        decay = {}
        for label, rate in dict(self.population_decay).items():
            if label not in known or float(rate) < 0:
                raise ValueError(f"bad population decay entry {label!r}")
            decay[label] = float(rate)
        object.__setattr__(self, "intermediates", inter)
        object.__setattr__(self, "omega_f", float(self.omega_f))
        object.__setattr__(self, "dephasing", MappingProxyType(rates))
        object.__setattr__(self, "population_decay", MappingProxyType(decay))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.intermediates)

    def level(self, label: str) -> Intermediate:
        for e in self.intermediates:
            if e.label == label:
                return e
        raise KeyError(label)

    def omega(self, label: str) -> float:
        if label == "g":
            return 0.0
        if label == "f":
            return self.omega_f
        return self.level(label).omega

    def omega_diff(self, i: str, j: str) -> float:
        """``ω_ij = ω_i − ω_j``."""
        return self.omega(i) - self.omega(j)

    def pure_dephasing(self, i: str, j: str) -> float:
        return self.dephasing.get(_pair_key(i, j), 0.0)

    def population_rate(self, label: str) -> float:
        return self.population_decay.get(label, 0.0)

    def gamma(self, i: str, j: str) -> float:
        """Effective damping of ``ρ_ij``: pure dephasing plus half of each lifetime rate.

        For ``i == j`` this is the population decay rate of level ``i``.
        """
        if i == j:
            return self.population_rate(i)
        return self.pure_dephasing(i, j) + 0.5 * (self.population_rate(i) + self.population_rate(j))

    def max_gamma(self) -> float:
        names = ("g", *self.labels, "f")
        return max(self.gamma(i, j) for i, j in itertools.combinations(names, 2))

    def dipole_product(self, e: str, e_prime: str) -> complex:
        """``μ_{fe′} μ_{e′g} μ_{ge} μ_{ef}``."""
        a, b = self.level(e), self.level(e_prime)
        return np.conj(b.mu_ef) * np.conj(b.mu_ge) * a.mu_ge * a.mu_ef

    def pairs(self):
        return itertools.product(self.labels, repeat=2)

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        def cx(z):
            return {"re": float(z.real), "im": float(z.imag)}

        return {
            "schema_version": SCHEMA_VERSION,
            "omega_f": self.omega_f,
            "intermediates": [
                {"label": e.label, "omega": e.omega, "mu_ge": cx(e.mu_ge), "mu_ef": cx(e.mu_ef)}
                for e in self.intermediates
            ],
            "dephasing": sorted(
                ({"levels": sorted(k), "rate": r} for k, r in self.dephasing.items()),
                key=lambda d: d["levels"],
            ),
            "population_decay": dict(sorted(self.population_decay.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LevelSystem":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported level-system schema version {version!r}")

        def cx(v):
            if isinstance(v, Mapping):
                return complex(float(v["re"]), float(v.get("im", 0.0)))
            return complex(v)

        inter = tuple(
            Intermediate(d["label"], float(d["omega"]), cx(d["mu_ge"]), cx(d["mu_ef"]))
            for d in data["intermediates"]
        )
        deph = {tuple(d["levels"]): float(d["rate"]) for d in data.get("dephasing", [])}
        return cls(float(data["omega_f"]), inter, deph, dict(data.get("population_decay", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LevelSystem":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------


def kubo_decay_factor(gamma: float, omega: float, t):
    """Dephased oscillation factor ``exp[−(γ − iω) t]`` of the impact-limit lineshape."""
    if gamma < 0:
        raise DomainError("dephasing rate must be non-negative")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("duration must be non-negative")
    value = np.exp(-(gamma - 1j * omega) * t_arr)
    return complex(value) if value.ndim == 0 else value


def coupling_constant(si: SIContext | None) -> float:
    """``ħω0/(ε0 n c)``, written as ``2 A0 L0²`` so reduced units give 2."""
    return 2.0 if si is None else si.coupling


def sigma1(level: LevelSystem, si: SIContext | None, omega_drive: float, target: str | None = None) -> float:
    """One-photon absorption cross section of ``g → target`` (first intermediate by default)."""
    e = level.level(target) if target is not None else level.intermediates[0]
    gamma = level.gamma(e.label, "g")
    detuning = e.omega - omega_drive
    denom = gamma * gamma + detuning * detuning
    if denom == 0:
        raise SingularityError("undamped transition driven exactly on resonance")
    return coupling_constant(si) * abs(e.mu_ge) ** 2 * gamma / denom


def resonance_guard(level: LevelSystem, omega0: float, guard: float | None = None) -> None:
    """Raise if the carrier lies within ``guard`` of a one-photon resonance.

    Both the absorption step ``ω_eg ≈ ω0`` and the emission step ``ω_fe ≈ ω0``
    are checked. The default band is ten times the largest effective damping.
    """
    band = DEFAULT_GUARD_FACTOR * level.max_gamma() if guard is None else float(guard)
    for e in level.intermediates:
        lower = e.omega - omega0
        upper = level.omega_f - e.omega - omega0
        for name, gap in (("ω_eg − ω0", lower), ("ω_fe − ω0", upper)):
            if gap == 0 or abs(gap) < band:
                raise NearResonanceError(
                    f"{name} = {gap:.6g} for level {e.label!r} is inside the guard band {band:.6g}"
                )


def big_sigma2(level: LevelSystem, omega0: float, guard: float | None = None) -> complex:
    """Two-photon dipole sum over intermediate pairs with far-off-resonance denominators."""
    resonance_guard(level, omega0, guard)
    total = 0j
    for e, ep in level.pairs():
        emit = -level.omega_diff("f", ep) + omega0
        absorb = level.omega_diff(e, "g") - omega0
        total += level.dipole_product(e, ep) / (emit * absorb)
    return complex(total)


class Sigma2Result(NamedTuple):
    sum_form: float
    """Cross section from the full double sum (real part of the dipole sum)."""
    squared_form: float
    """Cross section from the squared single sum, valid at two-photon resonance."""
    dipole_sum: complex


def sigma2_conventional(level: LevelSystem, si: SIContext | None, omega0: float,
                        guard: float | None = None) -> Sigma2Result:
    gamma = level.gamma("f", "g")
    if gamma == 0:
        raise SingularityError("two-photon cross section diverges for zero final-state damping")
    s2 = big_sigma2(level, omega0, guard)
    pref = coupling_constant(si) ** 2 / (2.0 * gamma)
    single = sum(e.mu_ge * e.mu_ef / (e.omega - omega0) for e in level.intermediates)
    return Sigma2Result(pref * s2.real, pref * abs(single) ** 2, s2)


def check_M_real(level: LevelSystem, rel_tol: float = 1e-12) -> bool:
    for e, ep in level.pairs():
        m = level.dipole_product(e, ep)
        if abs(m.imag) > rel_tol * abs(m):
            return False
    return True


def build_symmetric_nmer(
    mu_g: complex,
    mu_f: complex,
    mixing: np.ndarray,
    omegas,
    omega_f: float,
    dephasing: Mapping | None = None,
    population_decay: Mapping | None = None,
    labels=None,
) -> LevelSystem:
    """Aggregate of identical monomers whose one-exciton states are ``Σ_n U_jn |u_n⟩``.

    Every monomer has the same ground-to-exciton dipole ``mu_g`` and the same
    exciton-to-biexciton dipole ``mu_f``; the resulting dipole products are real.
    """
    U = np.asarray(mixing, dtype=complex)
    n = U.shape[0]
    if U.shape != (n, n):
        raise ValueError("mixing matrix must be square")
    if np.max(np.abs(U @ U.conj().T - np.eye(n))) > 1e-12:
        raise ValueError("mixing matrix is not unitary")
    omegas = np.broadcast_to(np.asarray(omegas, dtype=float), (n,))
    labels = labels or [f"e{j + 1}" for j in range(n)]
    coeff = U.sum(axis=1)
    inter = tuple(
        Intermediate(labels[j], omegas[j], np.conj(mu_g) * coeff[j], mu_f * np.conj(coeff[j]))
        for j in range(n)
    )
    return LevelSystem(omega_f, inter, dephasing or {}, population_decay or {})


def induced_dipole_steady_state(level: LevelSystem, si: SIContext | None, amplitude: complex,
                                omega0: float) -> complex:
    """Steady-state envelope of the induced dipole ``⟨d⁻⟩`` under a constant drive."""
    hbar = 1.0 if si is None else si.hbar
    L0 = field_scale(si)
    total = 0j
    for e in level.intermediates:
        total += abs(e.mu_ge) ** 2 / (level.gamma(e.label, "g") - 1j * (e.omega - omega0))
    return complex(hbar * L0 * np.conj(amplitude) * total / 1j)
