import math

import numpy as np
import pytest
from scipy import constants

from etpa import oracle
from etpa.errors import DomainError, NearResonanceError, SingularityError
from etpa.fieldstate import SIContext
from etpa.molecule import (
    Intermediate,
    LevelSystem,
    big_sigma2,
    build_symmetric_nmer,
    check_M_real,
    induced_dipole_steady_state,
    kubo_decay_factor,
    sigma1,
    sigma2_conventional,
)

# Dipole (C·m) that gives a 1 GM cross section for the calibration layout below;
# obtained by inverting the far-off-resonance cross-section sum by hand.
CALIBRATION_DIPOLE = 2.5018732183408886e-30


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def single_level(omega_e=1500.0, gamma_eg=2.0, gamma_fg=3.0, mu_ge=1.0, mu_ef=1.0):
    return LevelSystem(2000.0, (Intermediate("e", omega_e, mu_ge, mu_ef),),
                       {("e", "g"): gamma_eg, ("f", "g"): gamma_fg, ("f", "e"): 1.0})


class TestKubo:
    def test_unit_decay(self):
        assert kubo_decay_factor(1.0, 0.0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_zero_duration(self):
        assert kubo_decay_factor(3.0, 7.0, 0.0) == 1.0

    def test_negative_duration_rejected(self):
        with pytest.raises(DomainError):
            kubo_decay_factor(1.0, 0.0, -0.1)

    def test_multiplicative_over_disjoint_intervals(self):
        a = kubo_decay_factor(0.7, 2.3, 0.4)
        b = kubo_decay_factor(0.7, 2.3, 1.1)
        assert kubo_decay_factor(0.7, 2.3, 1.5) == pytest.approx(a * b, rel=1e-14)

    def test_agrees_with_phase_diffusion(self):
        sample = oracle.kubo_monte_carlo(1.0, 1.0, trajectories=100_000, seed=3)
        assert abs(sample.mean - kubo_decay_factor(1.0, 0.0, 1.0)) <= 3 * sample.stderr


class TestDamping:
    def test_lifetime_enters_half_per_level(self):
        level = LevelSystem(2000.0, (Intermediate("e", 1500.0, 1, 1),), {("e", "g"): 2.0, ("f", "e"): 0.5},
                            {"e": 0.8, "f": 0.2})
        assert level.gamma("e", "g") == pytest.approx(2.0 + 0.4)
        assert level.gamma("f", "e") == pytest.approx(0.5 + 0.5)
        assert level.gamma("g", "e") == level.gamma("e", "g")
        assert level.gamma("e", "e") == pytest.approx(0.8)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            LevelSystem(2000.0, (Intermediate("e", 1500.0, 1, 1),), {("e", "g"): -1.0})

    def test_round_trip(self, tmp_path, level):
        path = tmp_path / "level.json"
        level.save(path)
        assert LevelSystem.load(path) == level


class TestSigma1:
    def test_far_tail_vanishes(self):
        level = single_level()
        assert sigma1(level, None, 1500.0 + 1e8) < 1e-15 * sigma1(level, None, 1500.0)

    def test_peak_and_half_width(self):
        level = single_level(gamma_eg=2.0, mu_ge=0.3)
        si = SIContext(omega0=1500.0, area=1e-12)
        peak = sigma1(level, si, 1500.0)
        assert peak == pytest.approx(si.coupling * 0.09 / 2.0, rel=1e-14)
        assert sigma1(level, si, 1502.0) == pytest.approx(peak / 2, rel=1e-14)
        assert sigma1(level, si, 1498.0) == pytest.approx(peak / 2, rel=1e-14)

    def test_undamped_resonance_is_singular(self):
        with pytest.raises(SingularityError):
            sigma1(single_level(gamma_eg=0.0), None, 1500.0)


class TestSigma2:
    def test_single_term(self):
        level = single_level(mu_ge=0.5, mu_ef=2.0)
        omega0 = 990.0
        expected = 1.0 / ((-(2000.0 - 1500.0) + omega0) * (1500.0 - omega0))
        assert big_sigma2(level, omega0) == pytest.approx(expected, rel=1e-15)

    def test_resonant_sum_is_a_square(self, level):
        s2 = big_sigma2(level, 1000.0)
        single = sum(e.mu_ge * e.mu_ef / (e.omega - 1000.0) for e in level.intermediates)
        assert s2 == pytest.approx(abs(single) ** 2, rel=1e-12)

    def test_guard_band(self):
        with pytest.raises(NearResonanceError):
            big_sigma2(single_level(), 1495.0)
        with pytest.raises(NearResonanceError):
            big_sigma2(single_level(), 505.0)

    def test_two_forms_agree_at_resonance(self, level):
        si = SIContext(omega0=1000.0, area=1e-12)
        out = sigma2_conventional(level, si, 1000.0)
        assert abs(out.sum_form - out.squared_form) <= 1e-12 * out.squared_form

    def test_inverse_in_final_linewidth(self, level):
        base = sigma2_conventional(level, None, 1000.0).sum_form
        from etpa.validation import two_level_fixture

        assert sigma2_conventional(two_level_fixture(6.0), None, 1000.0).sum_form == pytest.approx(base / 2, rel=1e-14)

    def test_undamped_final_state(self):
        with pytest.raises(SingularityError):
            sigma2_conventional(single_level(gamma_fg=0.0), None, 1000.0)

    def test_one_goeppert_mayer_calibration(self):
        omega0 = 2 * math.pi * constants.c / 800e-9
        mu = CALIBRATION_DIPOLE / constants.hbar
        level = LevelSystem(2 * omega0, (Intermediate("e", 1.5 * omega0, mu, mu),), {("f", "g"): 1e13})
        si = SIContext(omega0=omega0, area=5e-12)
        assert sigma2_conventional(level, si, omega0).sum_form == pytest.approx(1e-58, rel=1e-9)


class TestAggregate:
    def test_random_unitaries_give_real_products(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            nmer = build_symmetric_nmer(0.9 + 0.4j, -0.3 + 1.1j, random_unitary(rng, 4), [1500, 1507, 1514, 1521],
                                        3000.0)
            assert check_M_real(nmer)

    def test_identity_mixing(self):
        nmer = build_symmetric_nmer(1.2, 0.7, np.eye(4), 1500.0, 3000.0)
        assert all(e.mu_ge == pytest.approx(1.2) for e in nmer.intermediates)
        assert len({e.omega for e in nmer.intermediates}) == 1

    def test_non_unitary_rejected(self):
        with pytest.raises(ValueError):
            build_symmetric_nmer(1.0, 1.0, 1.01 * np.eye(3), 1500.0, 3000.0)

    def test_complex_phases_detected(self):
        level = LevelSystem(3000.0, (Intermediate("a", 1500, 1.0, 1.0), Intermediate("b", 1510, 1j, 0.5 + 0.5j)))
        m = level.dipole_product("a", "b")
        assert abs(m.imag) > 0.1 * abs(m)
        assert not check_M_real(level)


class TestInducedDipole:
    def test_no_field(self, level):
        assert induced_dipole_steady_state(level, None, 0.0, 1000.0) == 0

    def test_resonant_magnitude(self):
        level = single_level(gamma_eg=2.0, mu_ge=0.6)
        si = SIContext(omega0=1500.0, area=1e-12)
        value = induced_dipole_steady_state(level, si, 0.3 - 0.4j, 1500.0)
        d = 0.6 * si.hbar
        expected = si.L0 * 0.5 * d * d / (si.hbar * 2.0)
        assert abs(value) == pytest.approx(expected, rel=1e-14)

    def test_long_time_limit_of_memory_integral(self, level):
        amp = 0.7 + 0.2j
        steady = induced_dipole_steady_state(level, None, amp, 1000.0)
        late = oracle.induced_dipole_time_domain(level, None, lambda t: amp, 1000.0, 60.0)
        assert abs(late - steady) <= 1e-6 * abs(steady)
