import math

import numpy as np
import pytest

from cavitygeom.correlations import structure_factor
from cavitygeom.integrate import IntegrationError, dopri5, rk4
from cavitygeom.lattice import CouplingProfile, DomainError, LatticeConfig
from cavitygeom.spinwave import structure_factor_growth, structure_factor_one_period
from cavitygeom.twa import (
    IntegratorSettings,
    NoiseSpec,
    TrajectoryState,
    apply_crosstalk,
    converted_fraction,
    derive_seed,
    ensemble_csv,
    evolve,
    evolve_batch,
    measure,
    measurement_seed,
    read_ensemble_csv,
    run_ensemble,
    sample_initial,
    stack_records,
)
from cavitygeom.waveform import dispersion, synthesize_continuous, synthesize_pulsed

TWO_PI = 2.0 * math.pi


def lattice(M=8, periodic=True, n=10_000):
    return LatticeConfig(M, n, TWO_PI * 1530.0, TWO_PI * 290.0, periodic)


def scaled_pulsed(L, entries, peak_chi_tau, width=0.3):
    p = CouplingProfile(L.M, entries)
    d = dispersion(synthesize_pulsed(p, L, width), L)
    return synthesize_pulsed(p.scaled(peak_chi_tau / (np.abs(d.chi).max() * L.tau_B)), L, width)


def scaled_continuous(L, entries, peak_chi_tau):
    p = CouplingProfile(L.M, entries)
    d = dispersion(synthesize_continuous(p, L), L)
    return synthesize_continuous(p.scaled(peak_chi_tau / (np.abs(d.chi).max() * L.tau_B)), L)


# ------------------------------------------------------------ integrators


def test_dopri5_rows_step_independently():
    # rows with very different scales get their own step sizes
    rate = 2.0 - 1j
    y0 = np.array([[1.0], [1e-6], [1e3]], dtype=complex)
    y, steps = dopri5(lambda t, y: rate * y, 0.0, 2.0, y0, rtol=1e-10, atol=1e-14)
    assert np.allclose(y, y0 * np.exp(2.0 * rate), rtol=1e-8)
    assert steps.shape == (3,)
    single, _ = dopri5(lambda t, y: rate * y, 0.0, 2.0, y0[:1], rtol=1e-10, atol=1e-14)
    assert np.array_equal(single[0], y[0])


def test_rk4_fourth_order():
    f = lambda t, y: 1j * y
    errs = [abs(rk4(f, 0.0, 1.0, np.ones((1, 1), complex), n)[0, 0] - np.exp(1j)) for n in (20, 40)]
    assert 14 < errs[0] / errs[1] < 18


def test_dopri5_zero_span_and_direction():
    y0 = np.ones((1, 1), complex)
    y, _ = dopri5(lambda t, y: -y, 1.0, 1.0, y0)
    assert y[0, 0] == 1
    with pytest.raises(ValueError):
        dopri5(lambda t, y: -y, 1.0, 0.0, y0)


# ------------------------------------------------------------ sampling


def test_sampling_moments():
    L = lattice(M=4, n=100)
    z = np.array([sample_initial(L, s).sites for s in range(20_000)])
    pops = np.abs(z) ** 2
    assert pops[..., 0].mean() == pytest.approx(0.5, abs=0.02)
    assert pops[..., 2].mean() == pytest.approx(0.5, abs=0.02)
    rec = [measure(TrajectoryState(zz.reshape(-1)), NoiseSpec(), 0) for zz in z[:5000]]
    fx = stack_records(rec).fx
    assert fx.var(axis=0) == pytest.approx(np.full(4, 100.0), rel=0.08)


def test_sampling_is_deterministic():
    L = lattice()
    a, b = sample_initial(L, 42), sample_initial(L, 42)
    assert np.array_equal(a.zeta, b.zeta)
    assert not np.array_equal(a.zeta, sample_initial(L, 43).zeta)
    assert a.zeta.shape == (3 * L.M,)


def test_derived_seeds_are_distinct_and_stable():
    seeds = [derive_seed(5, j) for j in range(1000)]
    assert len(set(seeds)) == 1000
    assert derive_seed(5, 17) == seeds[17]
    assert measurement_seed(seeds[0]) != seeds[0]


# ------------------------------------------------------------ dynamics


def test_free_evolution_winds_only_m0():
    L = lattice()
    wf = synthesize_continuous(CouplingProfile(L.M, {0: 0.0}), L)
    s0 = sample_initial(L, 1)
    s1 = evolve(s0, wf, L, 0.37)
    t = 0.37 * L.tau_B
    assert np.allclose(s1.sites[:, 1], np.exp(1j * L.q * t) * s0.sites[:, 1], atol=1e-9)
    assert np.allclose(s1.sites[:, [0, 2]], s0.sites[:, [0, 2]], atol=1e-9)
    lab = evolve(s0, wf, L, 0.37, frame="lab")
    assert np.allclose(np.abs(lab.sites) ** 2, np.abs(s0.sites) ** 2, rtol=1e-9)


@pytest.mark.parametrize("frame", ["rotating", "lab"])
def test_conservation_continuous(frame):
    L = lattice(M=8, periodic=False)
    wf = scaled_continuous(L, {1: 1.0, 2: -0.5}, 4.0)
    s0 = sample_initial(L, 3)
    s1 = evolve(s0, wf, L, 3.0, frame=frame)
    assert abs(s1.norm() - s0.norm()) / s0.norm() <= 1e-8
    assert abs(s1.magnetization() - s0.magnetization()) / s0.norm() <= 1e-8
    assert np.sum(np.abs(s1.sites[:, [0, 2]]) ** 2) > 2 * np.sum(np.abs(s0.sites[:, [0, 2]]) ** 2)


def test_frame_equivalence():
    L = lattice(M=6, periodic=True)
    for wf in (scaled_continuous(L, {1: 1.0}, 3.0), scaled_pulsed(L, {1: 1.0, 2: 0.5}, 3.0)):
        z0 = np.stack([sample_initial(L, s).sites for s in range(4)])
        a = evolve_batch(z0, 0.0, wf, L, 2.0, "rotating")
        b = evolve_batch(z0, 0.0, wf, L, 2.0, "lab")
        scale = np.max(np.abs(a))
        assert np.max(np.abs(a - b)) / scale < 1e-6


def test_fixed_and_adaptive_agree():
    L = lattice(M=6, periodic=False)
    wf = scaled_continuous(L, {1: 1.0}, 3.0)
    z0 = sample_initial(L, 2).sites[None]
    a = evolve_batch(z0, 0.0, wf, L, 1.0)
    b = evolve_batch(z0, 0.0, wf, L, 1.0, settings=IntegratorSettings(method="fixed", steps_per_period=4096))
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-7


def test_rect_pulses_approach_ideal_kicks():
    L = lattice(M=8)
    z0 = np.stack([sample_initial(L, s).sites for s in range(4)])
    ideal = evolve_batch(z0, 0.0, scaled_pulsed(L, {1: 1.0}, 1.0, 0.0), L, 1.0)
    narrow = evolve_batch(z0, 0.0, scaled_pulsed(L, {1: 1.0}, 1.0, 0.02), L, 1.0)
    wide = evolve_batch(z0, 0.0, scaled_pulsed(L, {1: 1.0}, 1.0, 0.3), L, 1.0)
    e_narrow = np.max(np.abs(narrow - ideal))
    e_wide = np.max(np.abs(wide - ideal))
    assert e_narrow < e_wide
    assert e_narrow / np.max(np.abs(ideal[..., [0, 2]])) < 0.05


def test_integration_error_reports_drift():
    L = lattice(M=4, periodic=False)
    wf = scaled_continuous(L, {1: 1.0}, 3.0)
    z0 = sample_initial(L, 0).sites[None]
    with pytest.raises(IntegrationError) as info:
        evolve_batch(z0, 0.0, wf, L, 1.0, settings=IntegratorSettings(method="fixed", steps_per_period=8, drift_tol=1e-12))
    assert info.value.drift > 1e-12
    assert info.value.index == 0


def test_pulsed_one_period_matches_exact_formula():
    # each mode k_m is kicked at t_m = m tau / M and winds for tau - t_m before readout
    L = lattice(M=16)
    wf = scaled_pulsed(L, {3: 1.0}, 2.0, 0.0)
    recs = run_ensemble(L, wf, NoiseSpec(larmor_jitter_sigma=1e9), 1000, 1, 11)
    assert converted_fraction(recs) < 0.1
    chi = dispersion(wf, L).chi.real
    M = L.M
    pred = []
    for m in range(M):
        total = 0.0
        for j in (m, (-m) % M):
            total += 0.5 * structure_factor_one_period(chi[j], L.q * (1 - j / M), L.tau_B, L.n)
        pred.append(math.sqrt(total))
    F = structure_factor(recs)
    assert np.sqrt(np.mean((F / np.array(pred) - 1) ** 2)) < 0.05


def test_dephased_readout_matches_linear_oracle():
    L = lattice(M=16)
    wf = scaled_pulsed(L, {1: 1.0}, 1.5, 0.0)
    recs = run_ensemble(L, wf, NoiseSpec(readout_dephasing=True), 1000, 2, 5)
    assert converted_fraction(recs) < 0.1
    pred = structure_factor_growth(dispersion(wf, L), 2, model="dephased").magnitude
    F = structure_factor(recs)
    assert np.sqrt(np.mean((F / pred - 1) ** 2)) < 0.05


def test_pair_symmetry():
    L = lattice(M=8)
    recs = run_ensemble(L, scaled_pulsed(L, {1: 1.0}, 3.0), NoiseSpec(), 200, 2, 9)
    a = stack_records(recs)
    plus, minus = a.n_plus.sum(axis=1), a.n_minus.sum(axis=1)
    assert plus.mean() > 20 * L.M
    err = np.std(plus - minus) / math.sqrt(len(plus))
    assert abs(plus.mean() - minus.mean()) < 4 * err
    # pairs are created together, so each realisation keeps its initial imbalance
    initial = np.array([sample_initial(L, r.seed).magnetization() for r in recs])
    assert np.allclose(plus - minus, initial, atol=1e-6 * plus.mean())


# ------------------------------------------------------------ measurement


def test_measure_identity_without_noise():
    L = lattice()
    s = sample_initial(L, 0)
    rec = measure(s, NoiseSpec(), 1)
    assert np.allclose(rec.n_plus, np.abs(s.sites[:, 0]) ** 2)
    assert np.allclose(rec.n_plus + rec.n_zero + rec.n_minus, np.sum(np.abs(s.sites) ** 2, axis=1))
    z = s.sites
    fx = math.sqrt(2) * np.real(np.conj(z[:, 0]) * z[:, 1] + np.conj(z[:, 1]) * z[:, 2])
    assert np.allclose(rec.fx, fx)


def test_crosstalk_spike():
    x = np.zeros(7)
    x[3] = 1.0
    y = apply_crosstalk(x, 0.09)
    assert y[3] == pytest.approx(0.82)
    assert y[2] == pytest.approx(0.09) and y[4] == pytest.approx(0.09)
    edge = np.zeros(7)
    edge[0] = 1.0
    e = apply_crosstalk(edge, 0.09)
    assert e[0] == pytest.approx(0.82) and e[1] == pytest.approx(0.09) and e.sum() == pytest.approx(0.91)
    assert np.array_equal(apply_crosstalk(x, 0.0), x)
    with pytest.raises(DomainError):
        NoiseSpec(crosstalk_epsilon=0.5)


def test_site_jitter_kills_transverse_correlations():
    L = lattice(M=6)
    wf = scaled_pulsed(L, {1: 1.0}, 3.0, 0.0)
    z = evolve_batch(np.stack([sample_initial(L, s).sites for s in range(400)]), 0.0, wf, L, 2.0)
    t = 2.0 * L.tau_B
    clean = stack_records([measure(TrajectoryState(r.reshape(-1), t), NoiseSpec(), j) for j, r in enumerate(z)])
    noisy = stack_records(
        [measure(TrajectoryState(r.reshape(-1), t), NoiseSpec(site_jitter_sigma=1e6), j) for j, r in enumerate(z)]
    )
    def offdiag(fx):
        C = np.corrcoef(fx, rowvar=False)
        return np.abs(C[~np.eye(len(C), dtype=bool)]).mean()
    assert offdiag(clean.fx) > 0.3
    assert offdiag(noisy.fx) < 0.1
    assert np.array_equal(clean.n_plus, noisy.n_plus)


def test_global_jitter_is_a_common_rotation():
    L = lattice(M=6)
    s = evolve(sample_initial(L, 4), scaled_pulsed(L, {1: 1.0}, 3.0, 0.0), L, 2.0)
    a = measure(s, NoiseSpec(), 0)
    b = measure(s, NoiseSpec(larmor_jitter_sigma=1e4), 0)
    assert np.array_equal(a.n_plus, b.n_plus)
    assert not np.allclose(a.fx, b.fx)
    # every site's transverse spin turns by the same angle
    z = s.sites
    fplus = math.sqrt(2) * (np.conj(z[:, 0]) * z[:, 1] + np.conj(z[:, 1]) * z[:, 2])
    ang = np.linspace(0, TWO_PI, 3601)
    resid = [np.max(np.abs(np.real(fplus * np.exp(1j * p)) - b.fx)) for p in ang]
    assert min(resid) < 1e-2 * np.max(np.abs(fplus))


# ------------------------------------------------------------ ensembles


def test_single_trajectory_is_composition():
    L = lattice()
    wf = scaled_pulsed(L, {1: 1.0}, 2.0)
    noise = NoiseSpec(readout_dephasing=True, crosstalk_epsilon=0.05)
    rec = run_ensemble(L, wf, noise, 1, 2, 123)[0]
    seed = derive_seed(123, 0)
    s = evolve(sample_initial(L, seed), wf, L, 2)
    direct = measure(s, noise, measurement_seed(seed), L.tau_B)
    assert np.array_equal(rec.fx, direct.fx)
    assert np.array_equal(rec.n_zero, direct.n_zero)


def test_ensemble_determinism_and_order_independence():
    L = lattice()
    wf = scaled_pulsed(L, {1: 1.0}, 2.0)
    a = run_ensemble(L, wf, NoiseSpec(readout_dephasing=True), 10, 1, 7, batch_size=3)
    b = run_ensemble(L, wf, NoiseSpec(readout_dephasing=True), 10, 1, 7, batch_size=10)
    assert ensemble_csv(a) == ensemble_csv(b)
    c = run_ensemble(L, wf, NoiseSpec(readout_dephasing=True), 4, 1, 7)
    assert ensemble_csv(c) == ensemble_csv(a[:4])
    with pytest.raises(DomainError):
        run_ensemble(L, wf, NoiseSpec(), 0, 1, 7)


def test_ensemble_csv_roundtrip():
    L = lattice(M=4)
    recs = run_ensemble(L, scaled_pulsed(L, {1: 1.0}, 2.0), NoiseSpec(), 3, 1, 0)
    text = ensemble_csv(recs)
    assert text.splitlines()[0] == "realization,site,n_plus,n_zero,n_minus,fx"
    back = read_ensemble_csv(text)
    for r, s in zip(recs, back):
        assert np.array_equal(r.fx, s.fx) and np.array_equal(r.n_plus, s.n_plus)
