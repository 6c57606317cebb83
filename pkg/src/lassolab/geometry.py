"""Compatibility constants, l1/l2 restricted eigenvalues and a random-search oracle.

The compatibility constant

    phi^2(L, S) = min { s ||f_{b_S} - f_{b_Sc}||_n^2 : ||b_S||_1 = 1, ||b_Sc||_1 <= L }

is a nonconvex problem because of the l1-sphere constraint, but on each sign
orthant of b_S the sphere becomes a simplex and the problem is a convex QP.
We enumerate orthants (up to the global sign flip, which leaves the objective
unchanged) and solve each QP by accelerated projected gradient. A Frank-Wolfe
gap at the final iterate turns each solve into a certified lower bound as well.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .design import DesignMatrix
from .errors import CapacityError, DegenerateError, ParameterError

ORTHANT_CAP = 16
RANK_TOL = 1e-10


@dataclass
class SolverOptions:
    max_iters: int = 5000
    pg_tol: float = 1e-10
    orthant_cap: int = ORTHANT_CAP


@dataclass
class SolverStatus:
    converged: bool
    iterations: int
    orthants: int = 0
    lower_bound: float = 0.0
    heuristic: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "orthants": self.orthants,
            "lower_bound": self.lower_bound,
            "heuristic": self.heuristic,
            "note": self.note,
        }


class SolveResult(NamedTuple):
    value: float
    minimizer: np.ndarray
    status: SolverStatus


@dataclass(frozen=True)
class SupportPartition:
    """S = S1 u S2 (disjoint); indices are 0-based and sorted."""

    S: tuple[int, ...]
    S1: tuple[int, ...]
    S2: tuple[int, ...] = field(default=())

    def __post_init__(self):
        S, S1, S2 = (tuple(sorted(int(i) for i in x)) for x in (self.S, self.S1, self.S2))
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "S1", S1)
        object.__setattr__(self, "S2", S2)
        if set(S1) & set(S2):
            raise ParameterError("S1 and S2 must be disjoint")
        if set(S1) | set(S2) != set(S) or len(set(S)) != len(S):
            raise ParameterError("S1 and S2 must partition S")

    @classmethod
    def from_S1(cls, S: Sequence[int], S1: Sequence[int]) -> "SupportPartition":
        S1 = set(S1)
        return cls(tuple(S), tuple(S1), tuple(i for i in S if i not in S1))

    @property
    def s(self) -> int:
        return len(self.S)

    @property
    def s1(self) -> int:
        return len(self.S1)

    def complement(self, p: int) -> tuple[int, ...]:
        members = set(self.S)
        return tuple(j for j in range(p) if j not in members)

    def validate(self, p: int) -> None:
        if self.S and (self.S[0] < 0 or self.S[-1] >= p):
            raise ParameterError(f"indices must lie in 1..{p}")


@dataclass
class GeometryReport:
    phi2: float
    lambda1_min2: float
    lambda_min2: float
    phi2_re: float
    L: float
    S: tuple[int, ...]
    minimizer_phi: np.ndarray
    solver_status: dict

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "phi2": self.phi2,
            "lambda1_min2": self.lambda1_min2,
            "lambda_min2": self.lambda_min2,
            "phi2_re": self.phi2_re,
            "L": self.L,
            "S": [i + 1 for i in self.S],
            "status": self.solver_status,
        }


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def project_simplex(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = radius} (sort and shift)."""
    v = np.asarray(v, dtype=float)
    if radius <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_l1_ball(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if radius <= 0:
        return np.zeros_like(v)
    if np.sum(np.abs(v)) <= radius:
        return v.copy()
    return np.sign(v) * project_simplex(np.abs(v), radius)


# ---------------------------------------------------------------------------
# orthant QP
# ---------------------------------------------------------------------------

def _split(design: DesignMatrix, S: Sequence[int]):
    S = tuple(sorted(int(i) for i in S))
    if not S:
        raise ParameterError("S must be nonempty")
    if S[0] < 0 or S[-1] >= design.p or len(set(S)) != len(S):
        raise ParameterError(f"S must hold distinct indices in 1..{design.p}")
    Sc = tuple(j for j in range(design.p) if j not in set(S))
    return S, Sc


def _check_rank(design: DesignMatrix, S: tuple[int, ...]) -> None:
    G_SS = design.gram[np.ix_(S, S)]
    if np.linalg.matrix_rank(G_SS, tol=RANK_TOL) < len(S):
        raise DegenerateError(f"columns {[i + 1 for i in S]} are linearly dependent")


@njit(cache=True)
def _simplex_nb(v, radius):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    rho = 0
    for i in range(v.size):
        if u[i] * (i + 1) > css[i]:
            rho = i
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@njit(cache=True)
def _proj_nb(z, s, m, L):
    out = np.empty_like(z)
    out[:s] = _simplex_nb(z[:s], 1.0)
    if m:
        w = z[s:]
        if L <= 0:
            out[s:] = 0.0
        elif np.sum(np.abs(w)) <= L:
            out[s:] = w
        else:
            out[s:] = np.sign(w) * _simplex_nb(np.abs(w), L)
    return out


@njit(cache=True)
def _fista_nb(H, s, m, L, lip, max_iters, pg_tol, z0):
    z = _proj_nb(z0, s, m, L)
    fz = z @ H @ z
    y = z.copy()
    t = 1.0
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        z_new = _proj_nb(y - 2.0 * (H @ y) / lip, s, m, L)
        f_new = z_new @ H @ z_new
        if f_new > fz:
            # adaptive restart: drop momentum, take a plain step from z
            y = z.copy()
            t = 1.0
            z_new = _proj_nb(y - 2.0 * (H @ y) / lip, s, m, L)
            f_new = z_new @ H @ z_new
        step = lip * np.sqrt(np.sum((z_new - y) ** 2))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z = z_new
        fz = f_new
        t = t_new
        if step < pg_tol:
            converged = True
            break
    return z, fz, it, converged


def _solve_orthant(H, s, m, L, lip, opts: SolverOptions, z0=None):
    """min z^T H z over simplex(s) x L*B1(m). Returns (value, z, lower, iters, converged)."""
    if z0 is None:
        z0 = np.concatenate([np.full(s, 1.0 / s), np.zeros(m)])
    z, fz, it, converged = _fista_nb(np.ascontiguousarray(H, dtype=float), s, m, float(L), float(lip),
                                     int(opts.max_iters), float(opts.pg_tol), np.asarray(z0, dtype=float))
    fz = float(fz)
    # Frank-Wolfe gap: f* >= f(z) + min_v <grad, v - z>
    g = 2.0 * (H @ z)
    lin_min = float(np.min(g[:s]))
    if m:
        lin_min -= L * float(np.max(np.abs(g[s:])))
    gap = max(float(g @ z) - lin_min, 0.0)
    return max(fz, 0.0), z, max(fz - gap, 0.0), int(it), bool(converged)


def _orthant_signs(s: int):
    # global sign flip leaves every objective here unchanged; fix the first sign
    for rest in itertools.product((1.0, -1.0), repeat=s - 1):
        yield np.array((1.0,) + rest)


def _orthant_min(design, S, Sc, L, scale, opts: SolverOptions):
    s, m = len(S), (len(Sc) if L > 0 else 0)
    if s > opts.orthant_cap:
        raise CapacityError(
            f"|S|={s} exceeds the orthant cap {opts.orthant_cap}; use brute_force_min instead"
        )
    _check_rank(design, S)
    G = design.gram
    idx = list(S) + (list(Sc) if m else [])
    M = G[np.ix_(idx, idx)] * scale
    lip = 2.0 * max(float(np.linalg.eigvalsh(M)[-1]), 1e-300)
    best = (math.inf, None)
    lower = math.inf
    iters = 0
    all_conv = True
    count = 0
    for sigma in _orthant_signs(s):
        D = np.concatenate([sigma, -np.ones(m)])
        H = M * np.outer(D, D)
        val, z, lo, it, conv = _solve_orthant(H, s, m, L, lip, opts)
        count += 1
        iters += it
        all_conv &= conv
        lower = min(lower, lo)
        if val < best[0]:
            beta = np.zeros(design.p)
            beta[list(S)] = sigma * z[:s]
            if m:
                beta[list(Sc)] = z[s:]
            best = (val, beta)
    status = SolverStatus(converged=all_conv, iterations=iters, orthants=count, lower_bound=lower)
    return SolveResult(best[0], best[1], status)


def compatibility(design: DesignMatrix, S: Sequence[int], L: float, opts: SolverOptions | None = None) -> SolveResult:
    """phi^2(L, S) with minimizer b (f_{b_S} - f_{b_Sc} is the closest pair).

    ``status.lower_bound`` is a certified lower bound on the true minimum.
    """
    opts = opts or SolverOptions()
    if not L >= 0:
        raise ParameterError(f"L must be nonnegative, got {L}")
    S, Sc = _split(design, S)
    return _orthant_min(design, S, Sc, float(L), float(len(S)), opts)


def l1_eigenvalue(design: DesignMatrix, S: Sequence[int], opts: SolverOptions | None = None) -> SolveResult:
    """Lambda^2_min,1(S) = min { s b_S^T G b_S : ||b_S||_1 = 1 }."""
    opts = opts or SolverOptions()
    S, _ = _split(design, S)
    return _orthant_min(design, S, (), 0.0, float(len(S)), opts)


def min_eigenvalue(design: DesignMatrix, S: Sequence[int]) -> float:
    S, _ = _split(design, S)
    w = float(np.linalg.eigvalsh(design.gram[np.ix_(S, S)])[0])
    if -1e-10 <= w < 0.0:
        w = 0.0
    return w


# ---------------------------------------------------------------------------
# restricted eigenvalue (heuristic)
# ---------------------------------------------------------------------------

def _best_w(G_CC, G_CS, b, radius, lip, w0, iters=400, tol=1e-11):
    """min_w w^T G_CC w - 2 w^T G_CS b over the l1 ball (accelerated PG)."""
    lin = G_CS @ b
    w = project_l1_ball(w0, radius)
    y, t = w.copy(), 1.0

    def f(v):
        return float(v @ G_CC @ v - 2.0 * v @ lin)

    fw = f(w)
    for _ in range(iters):
        w_new = project_l1_ball(y - 2.0 * (G_CC @ y - lin) / lip, radius)
        f_new = f(w_new)
        if f_new > fw:
            y, t = w.copy(), 1.0
            w_new = project_l1_ball(y - 2.0 * (G_CC @ y - lin) / lip, radius)
            f_new = f(w_new)
        done = lip * float(np.linalg.norm(w_new - y)) < tol
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, fw, t = w_new, f_new, t_new
        if done:
            break
    return w


def restricted_eigenvalue(
    design: DesignMatrix,
    S: Sequence[int],
    L: float,
    opts: SolverOptions | None = None,
    *,
    restarts: int = 32,
    outer_steps: int = 150,
    seed: int = 0,
    warm_start: np.ndarray | None = None,
) -> SolveResult:
    """Upper bound on phi^2_RE(L, S) by multistart alternating minimization.

    With ||b_S||_2 = 1 fixed, the best b_Sc is found exactly (convex problem
    on the radius L ||b_S||_1 ball); b_S then takes a backtracking projected
    gradient step on the unit sphere. Starts: the bottom eigenvector of G_SS,
    the optional ``warm_start`` (e.g. the compatibility minimizer) and
    ``restarts`` random directions. Always flagged heuristic.
    """
    opts = opts or SolverOptions()
    S, Sc = _split(design, S)
    G = design.gram
    G_SS = G[np.ix_(S, S)]
    w_min, V = np.linalg.eigh(G_SS)
    if not Sc or L == 0:
        val = max(float(w_min[0]), 0.0)
        beta = np.zeros(design.p)
        beta[list(S)] = V[:, 0]
        return SolveResult(val, beta, SolverStatus(True, 0, lower_bound=val, note="exact: reduces to min eigenvalue"))
    G_CC = G[np.ix_(Sc, Sc)]
    G_CS = G[np.ix_(Sc, S)]
    lip_w = 2.0 * max(float(np.linalg.eigvalsh(G_CC)[-1]), 1e-300)

    def value(b, w):
        return float(b @ G_SS @ b - 2.0 * w @ G_CS @ b + w @ G_CC @ w)

    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))
    starts = [(V[:, 0].copy(), np.zeros(len(Sc)))]
    if warm_start is not None:
        b = np.asarray(warm_start, dtype=float)[list(S)]
        if np.linalg.norm(b) > 0:
            nb = np.linalg.norm(b)
            starts.append((b / nb, np.asarray(warm_start, dtype=float)[list(Sc)] / nb))
    for _ in range(restarts):
        b = rng.standard_normal(len(S))
        starts.append((b / np.linalg.norm(b), np.zeros(len(Sc))))

    best_val, best_beta = math.inf, None
    total = 0
    for b, w in starts:
        radius = L * float(np.sum(np.abs(b)))
        w = project_l1_ball(w, radius)
        w = _best_w(G_CC, G_CS, b, radius, lip_w, w)
        cur = value(b, w)
        eta = 0.5
        for _ in range(outer_steps):
            total += 1
            g = 2.0 * (G_SS @ b - G_CS.T @ w)
            g -= (g @ b) * b  # tangent component
            if np.linalg.norm(g) < 1e-12:
                break
            while eta > 1e-12:
                nb = b - eta * g
                nb /= np.linalg.norm(nb)
                rad = L * float(np.sum(np.abs(nb)))
                nw = _best_w(G_CC, G_CS, nb, rad, lip_w, w)
                nv = value(nb, nw)
                if nv < cur:
                    b, w, cur = nb, nw, nv
                    eta = min(eta * 2.0, 1.0)
                    break
                eta *= 0.5
            else:
                break
        if cur < best_val:
            best_val = cur
            best_beta = np.zeros(design.p)
            best_beta[list(S)] = b
            best_beta[list(Sc)] = w
    status = SolverStatus(
        converged=False, iterations=total, heuristic=True, note="upper bound from multistart local search"
    )
    return SolveResult(max(best_val, 0.0), best_beta, status)


def geometry_report(
    design: DesignMatrix, S: Sequence[int], L: float, opts: SolverOptions | None = None, *, seed: int = 0
) -> GeometryReport:
    S, _ = _split(design, S)
    comp = compatibility(design, S, L, opts)
    l1 = l1_eigenvalue(design, S, opts)
    lmin = min_eigenvalue(design, S)
    re = restricted_eigenvalue(design, S, L, opts, seed=seed, warm_start=comp.minimizer)
    status = {
        "phi2": comp.status.to_dict(),
        "lambda1_min2": l1.status.to_dict(),
        "lambda_min2": {"converged": True, "heuristic": False, "note": "smallest eigenvalue of the S-block"},
        "phi2_re": re.status.to_dict(),
    }
    return GeometryReport(
        phi2=comp.value,
        lambda1_min2=l1.value,
        lambda_min2=lmin,
        phi2_re=re.value,
        L=float(L),
        S=S,
        minimizer_phi=comp.minimizer,
        solver_status=status,
    )


# ---------------------------------------------------------------------------
# random-search oracle
# ---------------------------------------------------------------------------

def _uniform_l1_ball(rng, size, dim, radius):
    if dim == 0:
        return np.zeros((size, 0))
    d = rng.dirichlet(np.ones(dim + 1), size=size)[:, :dim]
    return radius * d * rng.choice((-1.0, 1.0), size=(size, dim))


def brute_force_min(
    design: DesignMatrix,
    S: Sequence[int],
    L: float,
    objective_tag: str = "compatibility",
    budget: int = 10_000,
    seed: int = 0,
    *,
    refine_starts: int = 10,
    refine_steps: int = 100,
) -> float:
    """Random search followed by coordinate pattern search; an upper bound.

    Independent of the orthant solver: no projections onto simplices, no
    gradients. Intended for s <= 3 and |S^c| <= 4.
    """
    if objective_tag not in ("compatibility", "l1_eig", "re"):
        raise ParameterError(f"unknown objective tag {objective_tag!r}")
    S = tuple(sorted(int(i) for i in S))
    Sc = tuple(j for j in range(design.p) if j not in set(S))
    s = len(S)
    if objective_tag == "l1_eig" or L == 0:
        Sc = ()
    m = len(Sc)
    X_S = design.X[:, list(S)]
    X_C = design.X[:, list(Sc)]
    n = design.n
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))

    def evaluate(B, W):
        # rows of B are l1-normalized b_S, rows of W lie in the L-ball
        F = B @ X_S.T - (W @ X_C.T if m else 0.0)
        sq = np.sum(F * F, axis=1) / n
        if objective_tag == "re":
            return sq / np.sum(B * B, axis=1)
        return s * sq

    B = rng.dirichlet(np.ones(s), size=budget) * rng.choice((-1.0, 1.0), size=(budget, s))
    W = _uniform_l1_ball(rng, budget, m, L)
    # the unit vertices are cheap and often optimal
    B = np.vstack([B, np.eye(s), -np.eye(s)])
    W = np.vstack([W, np.zeros((2 * s, m))])
    vals = evaluate(B, W)
    order = np.argsort(vals, kind="stable")[:refine_starts]
    best = float(vals[order[0]])

    def renorm(b, w):
        nb = np.sum(np.abs(b))
        if nb == 0:
            return None
        b = b / nb
        if m:
            w = project_l1_ball(w, L)
        return b, w

    for k in order:
        b, w = B[k].copy(), W[k].copy()
        cur = float(evaluate(b[None], w[None])[0])
        h = 0.1
        for _ in range(refine_steps):
            cands_b, cands_w = [], []
            z = np.concatenate([b, w])
            for i in range(s + m):
                for delta in (h, -h, -z[i]):
                    if delta == 0:
                        continue
                    zz = z.copy()
                    zz[i] += delta
                    out = renorm(zz[:s], zz[s:])
                    if out is not None:
                        cands_b.append(out[0])
                        cands_w.append(out[1])
            CB, CW = np.array(cands_b), np.array(cands_w).reshape(len(cands_b), m)
            cv = evaluate(CB, CW)
            j = int(np.argmin(cv))
            if cv[j] < cur:
                b, w, cur = CB[j], CW[j], float(cv[j])
            else:
                h *= 0.5
        best = min(best, cur)
    return best
