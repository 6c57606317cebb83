"""Packing, covering and decorrelation numbers of the columns under ||.||_n.

Point sets are either {psi_j} or the signed set {+psi_j} u {-psi_j}; in the
signed case point k < p is +psi_k and point p + k is -psi_k. Coverings are
internal: centers are drawn from the point set itself.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .design import DesignMatrix
from .errors import ApproximationWarning, CapacityError, DomainError, ParameterError


def default_radii(kmax: int = 10) -> list[float]:
    return [2.0 ** (-k / 2.0) for k in range(kmax + 1)]


def corr(design: DesignMatrix, j: int, k: int) -> float:
    return float(design.gram[j, k])


def points(design: DesignMatrix, include_signs: bool = False) -> np.ndarray:
    """Rows are the points (length-n vectors)."""
    P = design.X.T
    return np.vstack([P, -P]) if include_signs else P.copy()


def distance_matrix(design: DesignMatrix, include_signs: bool = False) -> np.ndarray:
    """Pairwise ||a - b||_n, computed from the Gram matrix."""
    G = design.gram
    if include_signs:
        G = np.block([[G, -G], [-G, G]])
    d = np.diag(G)
    D2 = d[:, None] + d[None, :] - 2.0 * G
    np.fill_diagonal(D2, 0.0)
    return np.sqrt(np.clip(D2, 0.0, None))


def farthest_point_order(D: np.ndarray) -> tuple[list[int], list[float]]:
    """Farthest-first traversal from point 0, ties to the lowest index.

    Returns the visiting order and, for each visited point, its distance to
    the previously chosen points at insertion time (inf for the first).
    """
    k = D.shape[0]
    order = [0]
    gaps = [math.inf]
    dist = D[0].copy()
    chosen = np.zeros(k, dtype=bool)
    chosen[0] = True
    while not chosen.all():
        cand = np.where(chosen, -1.0, dist)
        nxt = int(np.argmax(cand))  # argmax returns the first maximizer
        order.append(nxt)
        gaps.append(float(dist[nxt]))
        chosen[nxt] = True
        dist = np.minimum(dist, D[nxt])
    return order, gaps


def greedy_packing(design: DesignMatrix, u: float, include_signs: bool = False) -> list[int]:
    """Maximal u-packing by farthest-point greedy; every point is within u of it.

    Because the traversal does not depend on u and insertion distances are
    nonincreasing, the packing at radius u is a prefix of one fixed order.
    """
    if not u > 0:
        raise ParameterError("u must be positive")
    order, gaps = farthest_point_order(distance_matrix(design, include_signs))
    return sorted(i for i, g in zip(order, gaps) if g >= u)


def _cover_sets(D: np.ndarray, u: float) -> list[int]:
    k = D.shape[0]
    masks = []
    for c in range(k):
        mask = 0
        for i in np.flatnonzero(D[c] <= u):
            mask |= 1 << int(i)
        masks.append(mask)
    return masks


def min_cover_size(D: np.ndarray, u: float) -> int:
    """Exact minimum internal u-covering by branch and bound on bitmasks."""
    k = D.shape[0]
    if k == 0:
        return 0
    masks = _cover_sets(D, u)
    full = (1 << k) - 1
    max_cov = max(bin(mk).count("1") for mk in masks)
    # greedy upper bound to seed the search
    covered, greedy = 0, 0
    while covered != full:
        c = max(range(k), key=lambda i: (bin(masks[i] & ~covered).count("1"), -i))
        covered |= masks[c]
        greedy += 1
    best = greedy

    def search(covered: int, used: int):
        nonlocal best
        if covered == full:
            best = min(best, used)
            return
        left = bin(full & ~covered).count("1")
        if used + -(-left // max_cov) >= best:
            return
        # branch on the lowest uncovered point: some center must cover it
        low = (full & ~covered) & -(full & ~covered)
        cands = [c for c in range(k) if masks[c] & low]
        cands.sort(key=lambda c: -bin(masks[c] & ~covered).count("1"))
        for c in cands:
            search(covered | masks[c], used + 1)

    search(0, 0)
    return best


def covering_exact(design: DesignMatrix, u: float, include_signs: bool = False, max_points: int = 12) -> int:
    npts = design.p * (2 if include_signs else 1)
    if npts > max_points:
        raise CapacityError(f"{npts} points exceed max_points={max_points} for exact covering")
    if not u > 0:
        raise ParameterError("u must be positive")
    return min_cover_size(distance_matrix(design, include_signs), u)


def _max_independent_set(adj: list[int], k: int) -> int:
    """Size of a maximum independent set; adjacency as bitmasks."""
    best = 0

    def search(cand: int, size: int):
        nonlocal best
        if cand == 0:
            best = max(best, size)
            return
        if size + bin(cand).count("1") <= best:
            return
        # vertices with no neighbour among candidates are always taken
        v = None
        vdeg = -1
        c = cand
        free = 0
        while c:
            low = c & -c
            i = low.bit_length() - 1
            deg = bin(adj[i] & cand).count("1")
            if deg == 0:
                free |= low
            elif deg > vdeg:
                v, vdeg = i, deg
            c ^= low
        if free:
            search(cand & ~free, size + bin(free).count("1"))
            return
        # branch on the highest-degree vertex: take it, or drop it
        search(cand & ~adj[v] & ~(1 << v), size + 1)
        search(cand & ~(1 << v), size)

    search((1 << k) - 1, 0)
    return best


def _greedy_independent_set(adj: list[int], k: int) -> int:
    cand = (1 << k) - 1
    size = 0
    while cand:
        c, bestv, bestd = cand, None, None
        while c:
            low = c & -c
            i = low.bit_length() - 1
            d = bin(adj[i] & cand).count("1")
            if bestd is None or d < bestd:
                bestv, bestd = i, d
            c ^= low
        size += 1
        cand &= ~adj[bestv] & ~(1 << bestv)
    return size


def decorrelation(design: DesignMatrix, rho: float, exact_limit: int = 40) -> int:
    """M(rho): largest signed subset with all |correlations| strictly below rho.

    For a normalized design +psi_j and -psi_j always conflict (|corr| = 1 >= rho),
    so this is a maximum independent set on columns with an edge whenever
    |G_jk| >= rho. Exact up to ``exact_limit`` columns; a min-degree greedy
    lower bound beyond, with an ApproximationWarning.
    """
    if not 0 < rho <= 1:
        raise ParameterError(f"rho must lie in (0, 1], got {rho}")
    if not design.is_normalized():
        raise DomainError("decorrelation numbers require a normalized design (||psi_j||_n = 1)")
    G = design.gram
    p = design.p
    adj = []
    for j in range(p):
        mask = 0
        for k in np.flatnonzero(np.abs(G[j]) >= rho):
            if k != j:
                mask |= 1 << int(k)
        adj.append(mask)
    if p <= exact_limit:
        return _max_independent_set(adj, p)
    warnings.warn(f"p={p} > exact_limit={exact_limit}: greedy lower bound on M(rho)", ApproximationWarning)
    return _greedy_independent_set(adj, p)


@dataclass
class CoveringProfile:
    radii: list[float]
    packing_sizes: list[int]
    covering_upper: list[int]
    covering_exact: list[int] | None = None
    decorrelation: dict[float, int] = field(default_factory=dict)
    include_signs: bool = False
    n_points: int = 0

    def covering_at(self, u: float) -> int:
        """Best available bound on N(u), by monotonicity from the grid."""
        vals = self.covering_exact if self.covering_exact is not None else self.covering_upper
        usable = [v for r, v in zip(self.radii, vals) if r <= u]
        return min(usable) if usable else self.n_points

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "radii": self.radii,
            "packing": self.packing_sizes,
            "covering_upper": self.covering_upper,
            "covering_exact": self.covering_exact,
            "decorrelation": {repr(float(k)): v for k, v in self.decorrelation.items()},
        }


def covering_profile(
    design: DesignMatrix,
    radii: Sequence[float] | None = None,
    *,
    include_signs: bool = False,
    max_points: int = 12,
    rhos: Sequence[float] | None = None,
) -> CoveringProfile:
    radii = sorted(float(r) for r in (radii if radii is not None else default_radii()))
    D = distance_matrix(design, include_signs)
    order, gaps = farthest_point_order(D)
    packing = [sum(1 for g in gaps if g >= u) for u in radii]
    exact = None
    if D.shape[0] <= max_points:
        exact = [min_cover_size(D, u) for u in radii]
    decor = {}
    if design.is_normalized():
        for rho in rhos if rhos is not None else [round(0.1 * i, 10) for i in range(1, 11)]:
            decor[float(rho)] = decorrelation(design, rho)
    return CoveringProfile(
        radii=radii,
        packing_sizes=packing,
        covering_upper=list(packing),
        covering_exact=exact,
        decorrelation=decor,
        include_signs=include_signs,
        n_points=D.shape[0],
    )
