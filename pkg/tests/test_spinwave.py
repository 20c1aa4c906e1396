import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import comb

from cavitygeom.lattice import CouplingProfile, DomainError, LatticeConfig
from cavitygeom.spinwave import (
    bloch_propagator,
    dephased_structure_factor,
    exchange_coupling_from_cavity,
    fit_log_amplitude,
    predict_correlations,
    structure_factor_growth,
    structure_factor_one_period,
)
from cavitygeom.waveform import dispersion, drive_at_momentum, synthesize_continuous, synthesize_pulsed

TWO_PI = 2.0 * math.pi
TAU = 1.0 / 1530.0


def ring(M=16, q_hz=290.0):
    return LatticeConfig(M, 10_000, TWO_PI * 1530.0, TWO_PI * q_hz, True)


@settings(max_examples=300)
@given(st.floats(-50, 50), st.floats(-20, 20), st.floats(1e-4, 1e-2))
def test_symplectic_determinant(chi_tau, q_tau, tau):
    p = bloch_propagator(chi_tau / tau, q_tau / tau, tau)
    assert abs(p.lambda_plus * p.lambda_minus - 1) < 1e-12
    assert abs(np.linalg.det(p.Pi) - 1) < 1e-9 * max(1.0, abs(chi_tau)) ** 2


def test_propagator_eigenvalues_match_matrix():
    rng = np.random.default_rng(3)
    for _ in range(50):
        chi, q = rng.normal() * 500, abs(rng.normal()) * 2000
        p = bloch_propagator(chi, q, TAU)
        ev = np.linalg.eigvals(p.Pi)
        for lam in (p.lambda_plus, p.lambda_minus):
            assert np.min(np.abs(ev - lam)) < 1e-8 * max(1.0, abs(p.A))


def test_no_growth_without_quadratic_shift():
    for chi in (-3000.0, 0.0, 1234.5):
        p = bloch_propagator(chi, 0.0, TAU)
        assert p.A == 1.0
        assert p.lambda_plus == 1.0 and p.lambda_minus == 1.0


def test_strong_instability_asymptote():
    qt = 0.4 * math.pi
    for ct in (-15.0, -40.0, -200.0):
        p = bloch_propagator(ct / TAU, qt / TAU, TAU)
        assert abs(ct) * math.sin(qt) > 10
        want = 2 * math.cos(qt) + 2 * abs(ct) * math.sin(qt)
        assert p.lambda_plus.real == pytest.approx(want, rel=0.01)


def test_stability_classes():
    for ct in np.linspace(-5, 5, 41):
        for qt in np.linspace(0.05, 3.1, 31):
            p = bloch_propagator(ct / TAU, qt / TAU, TAU)
            if abs(p.A) <= 1:
                assert abs(abs(p.lambda_plus) - 1) < 1e-12 and abs(abs(p.lambda_minus) - 1) < 1e-12
                assert p.lambda_plus.imag >= p.lambda_minus.imag
            else:
                assert abs(p.lambda_plus.imag) < 1e-12 and abs(p.lambda_minus.imag) < 1e-12
                assert max(abs(p.lambda_plus), abs(p.lambda_minus)) > 1


def test_growth_is_fastest_at_dispersion_minimum():
    qt = 0.6
    chis = -np.linspace(0, 8, 33) / TAU
    growth = [bloch_propagator(c, qt / TAU, TAU).growth for c in chis]
    assert int(np.argmax(growth)) == int(np.argmin(chis))


def test_one_period_examples():
    n = 10_000
    assert structure_factor_one_period(0.0, 123.0, TAU, n) == pytest.approx(n)
    assert structure_factor_one_period(-1 / TAU, (math.pi / 2) / TAU, TAU, n) == pytest.approx(5 * n)
    for chi in (-700.0, 50.0, 3000.0):
        assert structure_factor_one_period(chi, math.pi / TAU, TAU, n) == pytest.approx(n)


@given(st.floats(-10, 10), st.floats(0, 3))
def test_dephased_one_period_closed_form(ct, qt):
    n = 100.0
    got = dephased_structure_factor(ct / TAU, qt / TAU, TAU, n, 1)
    assert got == pytest.approx(n * (1 + 2 * ct * ct), rel=1e-12)


def test_growth_shape_follows_drive_power_law():
    L = ring()
    wf = synthesize_pulsed(CouplingProfile(16, {3: 1.0}), L)
    d = dispersion(wf, L)
    shape = np.abs(wf.pulse_weights)
    for T in (1, 2, 3):
        pred = structure_factor_growth(d, T)
        assert np.allclose(pred.normalized, shape**T / np.max(shape**T), atol=1e-12)
    p1, p2 = structure_factor_growth(d, 2).normalized, structure_factor_growth(d, 4).normalized
    assert np.allclose(p1**2, p2, atol=1e-12)


def test_growth_flat_dispersion():
    L = ring()
    d = dispersion(synthesize_pulsed(CouplingProfile(16, {0: 1.0}), L), L)
    assert np.allclose(structure_factor_growth(d, 3).normalized, 1.0)


def test_growth_models_agree_with_direct_formulas():
    L = ring()
    d = dispersion(synthesize_pulsed(CouplingProfile(16, {1: 1e-3}), L), L)
    one = structure_factor_growth(d, 1, model="exact_one_period").magnitude ** 2
    for i, c in enumerate(d.chi.real):
        assert one[i] == pytest.approx(structure_factor_one_period(c, L.q, L.tau_B, L.n))
    with pytest.raises(DomainError):
        structure_factor_growth(d, 2, model="exact_one_period")
    with pytest.raises(DomainError):
        structure_factor_growth(d, 0)


def test_binomial_spreading():
    L = ring()
    d = dispersion(synthesize_pulsed(CouplingProfile(16, {1: 1.0}), L), L)
    c1 = predict_correlations(d, 1)
    assert [c1.at(x) * 6 for x in (0, 1, -1, 2, -2)] == pytest.approx([6, 4, 4, 1, 1], abs=1e-12)
    assert abs(c1.at(3)) < 1e-12
    c2 = predict_correlations(d, 2)
    b = comb(8, np.arange(9))
    for x in range(-4, 5):
        assert c2.at(x) == pytest.approx(b[x + 4] / b[4], abs=1e-12)


def test_r3_support():
    L = LatticeConfig(16, 10_000, TWO_PI * 1530.0, TWO_PI * 290.0, False)
    d = dispersion(synthesize_continuous(CouplingProfile(16, {3: 1.0}), L), L)
    c = predict_correlations(d, 1)
    support = {int(x) for x, v in zip(c.d, c.values) if abs(v) > 1e-10}
    assert support == {0, 3, -3, 6, -6}


def test_correlation_parseval():
    L = ring()
    d = dispersion(synthesize_pulsed(CouplingProfile(16, {1: 1.0, 2: 0.5}), L), L)
    for T in (1, 2, 3):
        power = np.abs(d.chi) ** (2 * T)
        c = predict_correlations(d, T)
        assert np.sum(c.values) == pytest.approx(power[0] / np.mean(power), rel=1e-10)


def test_fit_log_amplitude_recovers_scale():
    model = np.array([1.0, 0.5, 0.25, 0.05, 0.0])
    A, res, mask = fit_log_amplitude(3.0 * model, model)
    assert A == pytest.approx(3.0)
    assert res == pytest.approx(0.0, abs=1e-12)
    assert mask.tolist() == [True, True, True, False, False]


def test_cavity_coupling_limits():
    assert exchange_coupling_from_cavity(1e4, 80.0, 0.0, 0.0, 1e6)[:2] == (0.0, 0.0)
    Jp, Jm, Jt = exchange_coupling_from_cavity(1e4, 80.0, -2e7, 1e7, 1e30)
    assert abs(Jp) < 1e-20 and abs(Jm) < 1e-20
    with pytest.raises(DomainError):
        exchange_coupling_from_cavity(1e4, 80.0, -1e7, 0.0, 0.0)


@pytest.mark.parametrize("delta_mhz", [-4.0, -5.5, -7.0])
def test_cavity_coupling_order_of_magnitude(delta_mhz):
    n = 10_000
    _, _, Jt = exchange_coupling_from_cavity(
        1e4, TWO_PI * 13.0, TWO_PI * delta_mhz * 1e6, TWO_PI * 2.1e6, TWO_PI * 250e3
    )
    collective_khz = 2 * n * Jt / TWO_PI / 1e3
    assert 1.0 < collective_khz < 10.0
