"""Correlation estimators over ensembles of measurement records."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import DomainError, monna_map
from .series import DistanceSeries
from .twa import EnsembleArrays, stack_records

_CHANNELS = ("n_plus", "n_zero", "n_minus", "fx")


@dataclass(frozen=True)
class CorrelationMatrix:
    """M x M estimate of kind ``pm``, ``xx``, ``cxx`` (or ``other``).

    Undefined entries (zero-variance channels) are NaN and listed by
    :attr:`flagged`.
    """

    kind: str
    values: np.ndarray
    sample_count: int
    metadata: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def periodic(self) -> bool:
        return bool(self.metadata.get("periodic", False))

    @property
    def flagged(self) -> list[tuple[int, int]]:
        return [tuple(map(int, ij)) for ij in np.argwhere(~np.isfinite(self.values))]

    def symmetrized(self) -> "CorrelationMatrix":
        return CorrelationMatrix(self.kind, 0.5 * (self.values + self.values.T), self.sample_count, dict(self.metadata))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for (i, j), v in np.ndenumerate(self.values):
            w.writerow([i, j, repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        vals = [[None if not np.isfinite(v) else float(v) for v in row] for row in self.values]
        return {"kind": self.kind, "sample_count": self.sample_count, "metadata": self.metadata, "values": vals}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _channel(arrays: EnsembleArrays, obs):
    if isinstance(obs, str):
        if obs not in _CHANNELS:
            raise DomainError(f"unknown observable {obs!r}")
        return getattr(arrays, obs)
    return np.asarray(obs, dtype=float)


def pearson(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pearson matrix Corr(A_i, B_j) over rows; NaN where a variance vanishes."""
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    cov = A.T @ B
    sa = np.sqrt(np.sum(A * A, axis=0))
    sb = np.sqrt(np.sum(B * B, axis=0))
    denom = np.outer(sa, sb)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), np.nan)
    return np.clip(out, -1.0, 1.0)


def corr(records, A="n_plus", B="n_minus", metadata: dict | None = None) -> CorrelationMatrix:
    """Corr(A_i, B_j) across realisations.

    ``A`` and ``B`` are channel names or (realisations, M) arrays. The pair
    (n_plus, n_minus) gives kind ``pm``, (fx, fx) gives ``xx``.
    """
    arr = stack_records(records)
    if arr.count < 2:
        raise DomainError("need at least two records")
    a, b = _channel(arr, A), _channel(arr, B)
    if isinstance(A, str) and isinstance(B, str):
        kind = {("n_plus", "n_minus"): "pm", ("fx", "fx"): "xx"}.get((A, B), "other")
    else:
        kind = "other"
    values = pearson(a, b)
    if kind == "xx":
        values = 0.5 * (values + values.T)
    return CorrelationMatrix(kind, values, arr.count, dict(metadata or {}))


def cxx(records, n: float | None = None, metadata: dict | None = None) -> CorrelationMatrix:
    """Covariance of F^x normalised by n^2 (n defaults to the mean site population)."""
    arr = stack_records(records)
    if arr.count < 2:
        raise DomainError("need at least two records")
    if n is None:
        n = float(np.mean(arr.n_plus + arr.n_zero + arr.n_minus))
    cov = np.cov(arr.fx, rowvar=False, ddof=1)
    return CorrelationMatrix("cxx", np.atleast_2d(cov) / n**2, arr.count, dict(metadata or {}))


def distance_profile(C, periodic: bool | None = None) -> DistanceSeries:
    """Average of C_(i, i+d) along each diagonal band.

    Open chains give d = -(M-1)..(M-1) with divisor M - |d|; periodic
    profiles average over (i, i + d mod M) for d = 0..M-1. NaN entries are
    skipped and the divisor reduced accordingly.
    """
    if isinstance(C, CorrelationMatrix):
        periodic = C.periodic if periodic is None else periodic
        V = C.values
    else:
        V = np.asarray(C, dtype=float)
        periodic = bool(periodic)
    M = V.shape[0]
    idx = np.arange(M)
    if periodic:
        d = np.arange(M)
        vals = np.array([np.nanmean(V[idx, (idx + dd) % M]) if np.isfinite(V[idx, (idx + dd) % M]).any() else np.nan for dd in d])
        return DistanceSeries(d, vals, True)
    d = np.arange(-(M - 1), M)
    vals = []
    for dd in d:
        band = np.diagonal(V, offset=dd)
        vals.append(np.nanmean(band) if np.isfinite(band).any() else np.nan)
    return DistanceSeries(d, np.array(vals), False)


def momentum_grid(M: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(M) / M


def structure_factor(records) -> np.ndarray:
    """rms over realisations of F_k = sum_l exp(i k l) F^x_l / sqrt(M), k = 2 pi m / M."""
    arr = stack_records(records)
    M = arr.M
    k = momentum_grid(M)
    phase = np.exp(1j * np.outer(np.arange(M), k)) / math.sqrt(M)
    F = arr.fx @ phase
    return np.sqrt(np.mean(np.abs(F) ** 2, axis=0))


def structure_factor_csv(magnitude: np.ndarray) -> str:
    M = len(magnitude)
    lines = ["k_over_pi,magnitude"]
    for m, v in enumerate(magnitude):
        lines.append(f"{2.0 * m / M!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ bipartitions


def physical_cut(M: int) -> np.ndarray:
    v = np.zeros(M, dtype=bool)
    v[: M // 2] = True
    return v


def monna_cut(M: int) -> np.ndarray:
    """Sites whose bit-reversed index lies in the first half (contiguous on the tree)."""
    w = int(round(math.log2(M)))
    if 1 << w != M:
        raise DomainError("the Monna cut needs M a power of two")
    return np.array([monna_map(i, w) < M // 2 for i in range(M)])


def all_balanced_cuts(M: int) -> np.ndarray:
    """Every balanced bipartition once, with site 0 always in I."""
    if M % 2:
        raise DomainError("balanced cuts need M even")
    if M > 20:
        raise DomainError("exhaustive scan limited to M <= 20")
    rows = []
    for rest in itertools.combinations(range(1, M), M // 2 - 1):
        v = np.zeros(M, dtype=bool)
        v[0] = True
        v[list(rest)] = True
        rows.append(v)
    return np.array(rows)


def cut_correlations(cov: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    """Corr(sum_I F, sum_J F) for each boolean row of ``cuts`` given Cov(F).

    ``cov`` may carry leading batch axes.
    """
    V = cuts.astype(float)
    W = 1.0 - V
    VS = np.einsum("cm,...mn->...cn", V, cov)
    WS = np.einsum("cm,...mn->...cn", W, cov)
    vi = np.einsum("...cn,cn->...c", VS, V)
    cij = np.einsum("...cn,cn->...c", VS, W)
    vj = np.einsum("...cn,cn->...c", WS, W)
    return cij / np.sqrt(vi * vj)


def _check_cut(v: np.ndarray, M: int) -> np.ndarray:
    v = np.asarray(v, dtype=bool)
    if v.shape != (M,) or v.sum() * 2 != M:
        raise DomainError("partition must split the sites into equal halves")
    return v


def _jackknife_cov(x: np.ndarray, chunk: slice) -> np.ndarray:
    """Leave-one-out covariance matrices for the rows in ``chunk``."""
    N = x.shape[0]
    s1 = x.sum(axis=0)
    s2 = x.T @ x
    xj = x[chunk]
    m1 = (s1[None] - xj) / (N - 1)
    second = (s2[None] - xj[:, :, None] * xj[:, None, :]) / (N - 1)
    return (second - m1[:, :, None] * m1[:, None, :]) * (N - 1) / (N - 2)


@dataclass(frozen=True)
class BipartitionScan:
    s_values: list
    physical: np.ndarray
    monna: np.ndarray
    min_all: np.ndarray
    errors: dict
    min_cut: list

    def to_dict(self) -> dict:
        out = {}
        for i, s in enumerate(self.s_values):
            out[repr(float(s))] = {
                "physical": float(self.physical[i]),
                "monna": float(self.monna[i]),
                "min_all": float(self.min_all[i]),
                "physical_err": float(self.errors["physical"][i]),
                "monna_err": float(self.errors["monna"][i]),
                "min_all_err": float(self.errors["min_all"][i]),
                "min_cut": [int(j) for j in self.min_cut[i]],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def bipartite_scan(records_by_s: dict, partitions=("physical", "monna", "all"), jackknife: bool = True, chunk: int = 64) -> BipartitionScan:
    """Bipartite correlation C_b = Corr(F_I, F_J) of coarse-grained F^x.

    For each s, evaluates the physical cut, the Monna cut and (with "all")
    the minimum over every balanced bipartition, with leave-one-realisation-out
    jackknife standard deviations. NaN marks partitions not requested.
    """
    s_values = sorted(records_by_s)
    n = len(s_values)
    res = {k: np.full(n, np.nan) for k in ("physical", "monna", "min_all")}
    err = {k: np.full(n, np.nan) for k in ("physical", "monna", "min_all")}
    min_cut = [[] for _ in s_values]
    for i, s in enumerate(s_values):
        x = stack_records(records_by_s[s]).fx
        N, M = x.shape
        named = []
        if "physical" in partitions:
            named.append(("physical", _check_cut(physical_cut(M), M)))
        if "monna" in partitions:
            named.append(("monna", _check_cut(monna_cut(M), M)))
        cuts = np.array([c for _, c in named]) if named else np.zeros((0, M), bool)
        allc = all_balanced_cuts(M) if "all" in partitions else None
        cov = np.cov(x, rowvar=False)
        if len(cuts):
            vals = cut_correlations(cov, cuts)
            for (name, _), v in zip(named, vals):
                res[name][i] = v
        if allc is not None:
            cb = cut_correlations(cov, allc)
            j = int(np.argmin(cb))
            res["min_all"][i] = cb[j]
            min_cut[i] = list(np.flatnonzero(allc[j]))
        if jackknife and N > 2:
            reps_named, reps_min = [], []
            for start in range(0, N, chunk):
                cj = _jackknife_cov(x, slice(start, min(start + chunk, N)))
                if len(cuts):
                    reps_named.append(cut_correlations(cj, cuts))
                if allc is not None:
                    reps_min.append(cut_correlations(cj, allc).min(axis=-1))
            if reps_named:
                rn = np.concatenate(reps_named)
                sd = np.sqrt((N - 1) / N * np.sum((rn - rn.mean(axis=0)) ** 2, axis=0))
                for (name, _), v in zip(named, sd):
                    err[name][i] = v
            if reps_min:
                rm = np.concatenate(reps_min)
                err["min_all"][i] = math.sqrt((N - 1) / N * np.sum((rm - rm.mean()) ** 2))
    return BipartitionScan(s_values, res["physical"], res["monna"], res["min_all"], err, min_cut)


def jackknife_std(samples: np.ndarray, statistic) -> float:
    """Leave-one-out jackknife standard deviation of ``statistic(samples)``."""
    samples = np.asarray(samples)
    N = len(samples)
    if N < 3:
        raise DomainError("jackknife needs at least three samples")
    reps = np.array([statistic(np.delete(samples, j, axis=0)) for j in range(N)])
    return float(np.sqrt((N - 1) / N * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0)))
