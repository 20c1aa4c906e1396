"""Geometry recovered from correlation matrices.

Distances follow from a Gaussian ansatz |C_ij| = exp(-a d_ij^2), coordinates
from classical multidimensional scaling, couplings from the precision matrix,
and a coarse-graining pass builds the bulk graph (a loop or a tree).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .correlations import CorrelationMatrix
from .lattice import DomainError, two_adic_norm

CLIP_FLOOR = 1e-4
FLOOR_WEIGHT = 0.1
RIDGE_SCALE = 1e-6
MAX_CONDITION = 1e12


class DegenerateFitError(ValueError):
    """No correlation rises above the noise floor."""


class InversionError(ArithmeticError):
    """The regularised correlation matrix is too ill-conditioned to invert."""


class NonEuclideanWarning(UserWarning):
    """The distance matrix has large negative double-centred eigenvalues."""


def _values(C) -> np.ndarray:
    return C.values if isinstance(C, CorrelationMatrix) else np.asarray(C, dtype=float)


def fit_distances(C, floor: float = CLIP_FLOOR):
    """Fit d_ij = delta(|i-j|) and a to |C_ij| = exp(-a delta^2).

    Each separation class is fitted by weighted least squares on the clipped
    |C| (weight 0.1 on entries at the floor), assuming translation invariance
    along an open chain. The scale a makes the strongest class distance 1.
    Returns (d_ij, a).
    """
    V = np.abs(_values(C))
    M = V.shape[0]
    off = ~np.eye(M, dtype=bool)
    finite = np.isfinite(V)
    if not np.any(V[off & finite] > floor):
        raise DegenerateFitError("all off-diagonal correlations are at or below the noise floor")
    Vc = np.clip(np.where(finite, V, floor), floor, 1.0)
    u = np.empty(M - 1)
    for d in range(1, M):
        band = np.concatenate([np.diagonal(Vc, d), np.diagonal(Vc, -d)])
        ok = np.concatenate([np.diagonal(finite, d), np.diagonal(finite, -d)])
        w = np.where(band <= floor, FLOOR_WEIGHT, 1.0) * ok
        mean = np.sum(w * band) / np.sum(w) if np.sum(w) > 0 else floor
        u[d - 1] = -math.log(min(max(mean, floor), 1.0))
    a = float(u.min())
    if a <= 0:
        # strongest class is fully correlated; fall back to the next finite scale
        pos = u[u > 0]
        if pos.size == 0:
            raise DegenerateFitError("every separation is perfectly correlated")
        a = float(pos.min())
    delta = np.sqrt(u / a)
    idx = np.arange(M)
    sep = np.abs(idx[:, None] - idx[None, :])
    dmat = np.where(sep == 0, 0.0, delta[np.maximum(sep - 1, 0)])
    return dmat, a


def mds_spectrum(d: np.ndarray) -> np.ndarray:
    """Eigenvalues (descending) of -1/2 J D^2 J."""
    D2 = np.asarray(d, dtype=float) ** 2
    M = D2.shape[0]
    J = np.eye(M) - 1.0 / M
    return np.linalg.eigvalsh(-0.5 * J @ D2 @ J)[::-1]


def mds_embed(d, D: int = 3) -> np.ndarray:
    """Classical MDS: coordinates rho (M x D) with pairwise distances ~ d.

    Columns are ordered by decreasing eigenvalue; each column's first entry
    that is not numerically zero is made nonnegative.
    """
    d = np.asarray(d, dtype=float)
    M = d.shape[0]
    if d.shape != (M, M) or not np.allclose(d, d.T, atol=1e-12) or np.any(np.abs(np.diag(d)) > 1e-12):
        raise DomainError("distance matrix must be square, symmetric, zero on the diagonal")
    if D < 1:
        raise DomainError("target dimension must be at least 1")
    J = np.eye(M) - 1.0 / M
    B = -0.5 * J @ (d**2) @ J
    B = 0.5 * (B + B.T)
    w, U = np.linalg.eigh(B)
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    Dk = min(D, M)
    top = w[:Dk]
    if w[-1] < 0 and abs(w[-1]) > max(top[-1], 1e-9 * abs(w[0])):
        warnings.warn(
            f"non-Euclidean distances: eigenvalue {w[-1]:.3g} exceeds the {Dk}-th positive one",
            NonEuclideanWarning,
            stacklevel=2,
        )
    rho = U[:, :Dk] * np.sqrt(np.clip(top, 0.0, None))
    scale = max(float(np.max(np.abs(rho))), 1e-300)
    for c in range(Dk):
        nz = np.flatnonzero(np.abs(rho[:, c]) > 1e-9 * scale)
        if nz.size and rho[nz[0], c] < 0:
            rho[:, c] = -rho[:, c]
    rho = rho - rho.mean(axis=0)
    if Dk < D:
        rho = np.hstack([rho, np.zeros((M, D - Dk))])
    return rho


def pairwise_distances(rho: np.ndarray) -> np.ndarray:
    diff = rho[:, None, :] - rho[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def kruskal_stress(d: np.ndarray, rho: np.ndarray) -> float:
    e = pairwise_distances(rho)
    den = np.sum(d**2)
    return float(math.sqrt(np.sum((d - e) ** 2) / den)) if den > 0 else 0.0


def infer_couplings(C, ridge: float | None = None) -> np.ndarray:
    """Precision matrix J' = (C + eps I)^-1 with eps = ridge * trace(C) / M.

    ``ridge`` defaults to 1e-6; pass 0 for the unregularised inverse.
    Negative off-diagonal entries mean positive partial correlation.
    """
    V = _values(C)
    M = V.shape[0]
    if not np.allclose(V, V.T, atol=1e-10 * max(1.0, np.max(np.abs(V)))):
        raise DomainError("correlation matrix must be symmetric")
    if not np.all(np.isfinite(V)):
        raise DomainError("correlation matrix has undefined entries")
    eps = (RIDGE_SCALE if ridge is None else ridge) * np.trace(V) / M
    A = 0.5 * (V + V.T) + eps * np.eye(M)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise InversionError(f"condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}")
    P = np.linalg.inv(A)
    return 0.5 * (P + P.T)


def coupling_bonds(Jprime: np.ndarray, top: int | None = None) -> list[dict]:
    """Off-diagonal bonds sorted by |J'|; sign +1 marks ferromagnetic (J' < 0)."""
    M = Jprime.shape[0]
    iu = np.triu_indices(M, 1)
    vals = Jprime[iu]
    order = np.argsort(-np.abs(vals), kind="stable")
    if top is not None:
        order = order[:top]
    return [
        {"i": int(iu[0][o]), "j": int(iu[1][o]), "Jprime": float(vals[o]), "sign": int(-np.sign(vals[o]))}
        for o in order
    ]


def circle_fit(rho: np.ndarray):
    """Best-fit circle in the principal plane of the points.

    Returns (center in the plane, radius, max relative radial deviation).
    """
    X = rho - rho.mean(axis=0)
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    P = X @ Vt[:2].T if X.shape[1] >= 2 else np.hstack([X, np.zeros((len(X), 1))])
    A = np.column_stack([2 * P, np.ones(len(P))])
    b = np.sum(P**2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c = sol[:2]
    R = math.sqrt(max(sol[2] + c @ c, 0.0))
    r = np.linalg.norm(P - c, axis=1)
    dev = float(np.max(np.abs(r - R)) / R) if R > 0 else float("inf")
    return c, R, dev


@dataclass(frozen=True)
class GeometryEmbedding:
    coordinates: np.ndarray
    a: float
    distance_matrix: np.ndarray
    stress: float
    Jprime: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "coordinates": self.coordinates.tolist(),
            "a": self.a,
            "stress": self.stress,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def embed(C, D: int = 3, couplings: bool = True) -> GeometryEmbedding:
    """Distances from C, then MDS coordinates and (optionally) J'."""
    d, a = fit_distances(C)
    rho = mds_embed(d, D)
    J = None
    if couplings:
        J = infer_couplings(C)
    return GeometryEmbedding(rho, a, d, kruskal_stress(d, rho), J)


# ------------------------------------------------------------ bulk graph


@dataclass
class BulkGraph:
    """Leaves 0..M-1 plus coarse-grained nodes; edges are (a, b, level, kind).

    ``kind`` is "bond" for a connection drawn between nodes of the previous
    level and "parent" for membership of a node in its coarse-grained group.
    """

    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    levels: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return sum(1 for n in self.nodes if n["level"] == 0)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def children(self, node_id: int) -> list[int]:
        return [b for a, b, lvl, kind in self.edges if kind == "parent" and a == node_id]

    def bonds(self, level: int) -> list[tuple[int, int]]:
        return [(a, b) for a, b, lvl, kind in self.edges if kind == "bond" and lvl == level]

    def is_binary_tree(self) -> bool:
        internal = [n["id"] for n in self.nodes if n["level"] > 0]
        return bool(internal) and all(len(self.children(i)) == 2 for i in internal)

    def is_single_loop(self) -> bool:
        """One level whose bonds form one cycle through every leaf."""
        if self.depth != 1:
            return False
        bonds = self.bonds(1)
        M = self.M
        if len(bonds) != M:
            return False
        deg = np.zeros(M, dtype=int)
        adj = {i: [] for i in range(M)}
        for a, b in bonds:
            deg[a] += 1
            deg[b] += 1
            adj[a].append(b)
            adj[b].append(a)
        if np.any(deg != 2):
            return False
        seen, stack = {0}, [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == M

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "edges": [{"a": a, "b": b, "level": lvl, "kind": kind} for a, b, lvl, kind in self.edges],
            "levels": self.levels,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class _Union:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def reconstruct_bulk(C, rho: np.ndarray | None = None) -> BulkGraph:
    """Coarse-grain the sites into a bulk graph.

    At each level the current groups, ordered by their smallest member, sit on
    a ring. The coarse-grained correlation between two groups is the mean |C|
    over member pairs (the signed mean is kept for bond colouring). The ring
    distance class with the largest mean coarse-grained correlation wins,
    ties going to the smaller distance; every pair of groups at that distance
    is bonded and connected components become the next level's groups.
    Stops when a single group remains.
    """
    V = _values(C)
    M = V.shape[0]
    if M < 4:
        raise DomainError("bulk reconstruction needs M >= 4")
    absV = np.abs(np.nan_to_num(V))
    if rho is None:
        rho = np.zeros((M, 1))
    g = BulkGraph()
    for i in range(M):
        g.nodes.append({"id": i, "level": 0, "sites": [i], "position": [float(x) for x in rho[i]]})
    current = [(i, [i]) for i in range(M)]  # (node id, member sites)
    level = 0
    while len(current) > 1:
        level += 1
        G = len(current)
        mag = np.zeros((G, G))
        sgn = np.zeros((G, G))
        for a in range(G):
            for b in range(G):
                ia, ib = current[a][1], current[b][1]
                mag[a, b] = absV[np.ix_(ia, ib)].mean()
                sgn[a, b] = np.nan_to_num(V[np.ix_(ia, ib)]).mean()
        classes = list(range(1, G // 2 + 1))
        score = np.array([np.mean([mag[a, (a + d) % G] for a in range(G)]) for d in classes])
        best = float(score.max())
        winners = [d for d, s in zip(classes, score) if np.isclose(s, best, rtol=1e-12, atol=0.0)]
        dist = winners[0]
        uf = _Union(G)
        for a in range(G):
            b = (a + dist) % G
            lo, hi = min(a, b), max(a, b)
            if (current[lo][0], current[hi][0], level, "bond") not in g.edges:
                g.edges.append((current[lo][0], current[hi][0], level, "bond"))
            uf.union(a, b)
        comps = {}
        for a in range(G):
            comps.setdefault(uf.find(a), []).append(a)
        nxt = []
        for members in sorted(comps.values(), key=lambda m: min(s for a in m for s in current[a][1])):
            sites = sorted(s for a in members for s in current[a][1])
            nid = len(g.nodes)
            g.nodes.append({
                "id": nid,
                "level": level,
                "sites": sites,
                "position": [float(x) for x in rho[sites].mean(axis=0)],
            })
            for a in members:
                g.edges.append((nid, current[a][0], level, "parent"))
            nxt.append((nid, sites))
        g.levels.append({
            "level": level,
            "distance_class": dist,
            "tie": winners if len(winners) > 1 else [],
            "scores": [float(s) for s in score],
            "bond_signs": [float(np.sign(sgn[a, (a + dist) % G])) for a in range(G)],
            "groups": [s for _, s in nxt],
        })
        current = nxt
    return g


def monna_block_score(C) -> list[tuple[Fraction, float]]:
    """Mean |C_ij| grouped by the 2-adic norm |i - j|_2, largest norm first."""
    V = np.abs(_values(C))
    M = V.shape[0]
    if M < 2 or M & (M - 1):
        raise DomainError("M must be a power of two")
    groups: dict[Fraction, list[float]] = {}
    for i in range(M):
        for j in range(M):
            if i != j and np.isfinite(V[i, j]):
                groups.setdefault(two_adic_norm(i - j), []).append(V[i, j])
    return [(k, float(np.mean(groups[k]))) for k in sorted(groups, reverse=True)]


def is_monotone_increasing(score) -> bool:
    """True when mean |C| strictly increases as the 2-adic distance shrinks."""
    vals = [v for _, v in score]
    return all(b > a for a, b in zip(vals, vals[1:]))
