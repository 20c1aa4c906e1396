import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cavitygeom.correlations import (
    CorrelationMatrix,
    all_balanced_cuts,
    bipartite_scan,
    corr,
    cut_correlations,
    cxx,
    distance_profile,
    jackknife_std,
    monna_cut,
    pearson,
    physical_cut,
    structure_factor,
)
from cavitygeom.lattice import DomainError, LatticeConfig
from cavitygeom.twa import EnsembleArrays, NoiseSpec, measure, sample_initial


def ensemble(fx, n_plus=None, n_minus=None):
    fx = np.asarray(fx, dtype=float)
    n_plus = np.abs(fx) if n_plus is None else n_plus
    n_minus = np.abs(fx) if n_minus is None else n_minus
    return EnsembleArrays(n_plus, np.full_like(fx, 100.0), n_minus, fx)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (12, 5), elements=st.floats(-1e3, 1e3)))
def test_pearson_bounds(x):
    C = pearson(x, x[:, ::-1])
    finite = C[np.isfinite(C)]
    assert np.all(finite <= 1.0) and np.all(finite >= -1.0)


def test_corr_diagonal_and_kinds():
    rng = np.random.default_rng(0)
    e = ensemble(rng.normal(size=(200, 6)), rng.normal(size=(200, 6)), rng.normal(size=(200, 6)))
    xx = corr(e, "fx", "fx")
    assert xx.kind == "xx"
    assert np.allclose(np.diag(xx.values), 1.0)
    assert np.array_equal(xx.values, xx.values.T)
    pm = corr(e, "n_plus", "n_minus")
    assert pm.kind == "pm"
    sym = pm.symmetrized()
    assert np.allclose(sym.values, sym.values.T)
    with pytest.raises(DomainError):
        corr(e, "fy", "fx")


def test_zero_variance_is_flagged():
    rng = np.random.default_rng(1)
    fx = rng.normal(size=(50, 4))
    fx[:, 2] = 3.0
    C = corr(ensemble(fx), "fx", "fx")
    assert (2, 0) in C.flagged and (2, 2) in C.flagged
    assert np.isnan(C.values[2, 1])
    assert C.to_dict()["values"][2][1] is None


def test_pm_diagonal_keeps_onsite_pairs():
    rng = np.random.default_rng(2)
    pairs = rng.exponential(size=(400, 5))
    C = corr(ensemble(rng.normal(size=(400, 5)), pairs, pairs + 0.01 * rng.normal(size=(400, 5))))
    assert np.all(np.diag(C.values) > 0.99)


def test_initial_state_covariance():
    L = LatticeConfig(6, 1000, 1.0, 0.0)
    recs = [measure(sample_initial(L, s), NoiseSpec(), s) for s in range(4000)]
    c = cxx(recs, L.n)
    assert np.allclose(np.diag(c.values), 1 / L.n, rtol=0.1)
    off = c.values[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(off)) < 5 / (L.n * math.sqrt(4000))


def test_distance_profile_examples():
    prof = distance_profile(np.eye(5))
    assert prof.at(0) == 1 and all(prof.at(d) == 0 for d in (-4, -1, 1, 4))
    rng = np.random.default_rng(3)
    A = rng.normal(size=(7, 7))
    prof = distance_profile(A + A.T)
    assert all(prof.at(d) == pytest.approx(prof.at(-d)) for d in range(7))
    band = distance_profile(A)
    assert band.at(2) == pytest.approx(np.mean([A[i, i + 2] for i in range(5)]))
    ring = distance_profile(A, periodic=True)
    assert ring.at(2) == pytest.approx(np.mean([A[i, (i + 2) % 7] for i in range(7)]))


def test_distance_profile_skips_nan():
    A = np.ones((4, 4))
    A[0, 1] = np.nan
    prof = distance_profile(A)
    assert prof.at(1) == 1.0


def test_structure_factor_uniform_profile():
    rng = np.random.default_rng(4)
    fx = np.repeat(rng.normal(size=(30, 1)), 8, axis=1)
    F = structure_factor(ensemble(fx))
    assert F[0] > 0 and np.all(F[1:] < 1e-12 * F[0])


def test_structure_factor_parseval():
    rng = np.random.default_rng(5)
    fx = rng.normal(size=(100, 12)) * np.arange(1, 13)
    F = structure_factor(ensemble(fx))
    assert np.sum(F**2) == pytest.approx(np.sum(np.mean(fx**2, axis=0)), rel=1e-10)


def test_estimator_consistency():
    rng = np.random.default_rng(6)
    cov = np.array([[1.0, 0.6], [0.6, 1.0]])
    errs = {}
    for N in (100, 10_000):
        e = []
        for _ in range(40):
            x = rng.multivariate_normal([0, 0], cov, size=N)
            e.append(corr(ensemble(x), "fx", "fx").values[0, 1] - 0.6)
        errs[N] = np.sqrt(np.mean(np.square(e)))
    ratio = errs[100] / errs[10_000]
    assert 5 < ratio < 20


def test_jackknife_matches_repeated_experiments():
    rng = np.random.default_rng(7)
    cov = np.array([[1.0, 0.4], [0.4, 1.0]])
    stat = lambda x: np.corrcoef(x.T)[0, 1]
    reps = [stat(rng.multivariate_normal([0, 0], cov, size=200)) for _ in range(300)]
    jk = jackknife_std(rng.multivariate_normal([0, 0], cov, size=200), stat)
    assert 1 / 1.5 < jk / np.std(reps) < 1.5


def test_cuts():
    assert physical_cut(16).tolist() == [True] * 8 + [False] * 8
    assert np.array_equal(np.flatnonzero(monna_cut(16)), np.arange(0, 16, 2))
    cuts = all_balanced_cuts(16)
    assert cuts.shape == (6435, 16)
    assert np.all(cuts[:, 0]) and np.all(cuts.sum(axis=1) == 8)
    assert len({c.tobytes() for c in cuts}) == 6435
    with pytest.raises(DomainError):
        all_balanced_cuts(7)


def test_anticorrelated_halves():
    rng = np.random.default_rng(8)
    base = rng.normal(size=(100, 1))
    fx = np.hstack([np.repeat(base, 4, axis=1), -np.repeat(base, 4, axis=1)])
    cov = np.cov(fx, rowvar=False)
    assert cut_correlations(cov, physical_cut(8)[None])[0] == pytest.approx(-1.0)


def test_bipartite_scan_bounds_and_errors():
    rng = np.random.default_rng(9)
    data = {}
    for s in (-1.0, 0.0, 1.0):
        A = rng.normal(size=(16, 16)) * 0.3 + np.eye(16)
        data[s] = ensemble(rng.normal(size=(150, 16)) @ A)
    scan = bipartite_scan(data)
    assert scan.s_values == [-1.0, 0.0, 1.0]
    assert np.all(scan.min_all <= scan.physical + 1e-12)
    assert np.all(scan.min_all <= scan.monna + 1e-12)
    assert np.all(np.isfinite(scan.errors["min_all"])) and np.all(scan.errors["physical"] > 0)
    d = scan.to_dict()
    assert set(d) == {"-1.0", "0.0", "1.0"} and len(d["0.0"]["min_cut"]) == 8


def test_jackknife_cov_matches_bruteforce():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(20, 4))
    full = np.hstack([x, x[:, ::-1] + rng.normal(size=(20, 4))])
    scan = bipartite_scan({0.0: ensemble(full)}, ("physical",), chunk=7)
    cut = physical_cut(8)[None]
    reps = np.array([cut_correlations(np.cov(np.delete(full, j, axis=0), rowvar=False), cut)[0] for j in range(20)])
    brute = math.sqrt(19 / 20 * np.sum((reps - reps.mean()) ** 2))
    assert scan.errors["physical"][0] == pytest.approx(brute, rel=1e-9)


def test_unbalanced_partition_rejected():
    from cavitygeom.correlations import _check_cut

    with pytest.raises(DomainError):
        _check_cut(np.array([True, True, True, False]), 4)


def test_finite_statistics_floor():
    rng = np.random.default_rng(11)
    N, M = 50, 18
    rms = []
    for _ in range(20):
        e = ensemble(rng.normal(size=(N, M)), rng.normal(size=(N, M)), rng.normal(size=(N, M)))
        C = corr(e).values
        rms.append(np.sqrt(np.mean(C**2)))
    assert np.mean(rms) == pytest.approx(1 / math.sqrt(N), rel=0.3)


def test_matrix_exports():
    C = CorrelationMatrix("xx", np.array([[1.0, 0.5], [0.5, 1.0]]), 10, {"T": 2})
    assert C.to_csv().splitlines() == ["row,col,value", "0,0,1.0", "0,1,0.5", "1,0,0.5", "1,1,1.0"]
    assert '"kind": "xx"' in C.to_json()
