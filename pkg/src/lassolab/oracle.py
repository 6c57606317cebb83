"""Oracle-inequality bookkeeping: projections, the four-term bound, lambda rules.

For an index set S split as S1 u S2, on the noise event the Lasso satisfies

    ||f_hat - f0||_n^2 + lam ||b_hat - b^S||_1
        <= 56 lam^2 s1 / phi^2(6, S1)  +  (28/3) lam ||(b^S)_{S2}||_1
           + (7/6) (lambda0 / lam^alpha)^(2/(1-alpha))  +  7 ||f_S - f0||_n^2,

where f_S = f_{b^S} is the least-squares projection of f0 on the span of S.
The "remark-scale" estimation error uses the constants 8 and 4/3 instead of
56 and 28/3; both are available.
"""
from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .design import DesignMatrix, empirical_norm
from .errors import CapacityError, DegenerateError, InputError, ParameterError
from .geometry import SolverOptions, SupportPartition, compatibility

PARTITION_CAP = 16
SCALES = {"theorem": (56.0, 28.0 / 3.0), "remark": (8.0, 4.0 / 3.0)}


@dataclass
class ProjectionResult:
    bS: np.ndarray
    fS: np.ndarray
    approx_error: float
    rank_deficient: bool = False


@dataclass
class OracleReport:
    lam: float
    lambda0: float
    alpha: float
    partition: SupportPartition
    rhs_terms: dict
    rhs_total: float
    estimation_error_ES: float
    rule: str
    c: float = 1.0
    phi2: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "lambda": self.lam,
            "lambda0": self.lambda0,
            "alpha": self.alpha,
            "rule": self.rule,
            "c": self.c,
            "S": [i + 1 for i in self.partition.S],
            "S1": [i + 1 for i in self.partition.S1],
            "S2": [i + 1 for i in self.partition.S2],
            "phi2_6_S1": self.phi2,
            "rhs_terms": dict(self.rhs_terms),
            "rhs_total": self.rhs_total,
            "estimation_error_ES": self.estimation_error_ES,
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# projection and the elementary inequality
# ---------------------------------------------------------------------------

def project(design: DesignMatrix, S: Sequence[int], f0) -> ProjectionResult:
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (design.n,):
        raise InputError(f"f0 must have length n={design.n}")
    S = sorted(int(i) for i in S)
    bS = np.zeros(design.p)
    if not S:
        return ProjectionResult(bS, np.zeros(design.n), empirical_norm(design, f0))
    XS = design.X[:, S]
    coef, _, rank, _ = np.linalg.lstsq(XS, f0, rcond=None)
    bS[S] = coef
    fS = XS @ coef
    return ProjectionResult(bS, fS, empirical_norm(design, fS - f0), rank_deficient=rank < len(S))


def tuning_term(lambda0: float, lam: float, alpha: float) -> float:
    """(lambda0 / lam^alpha)^(2/(1-alpha)); for alpha = 1 this is inf, 1 or 0
    as lam is below, equal to or above lambda0."""
    if not (lambda0 > 0 and lam > 0 and 0.0 <= alpha <= 1.0):
        raise ParameterError("need lambda0 > 0, lambda > 0 and alpha in [0, 1]")
    if alpha == 1.0:
        ratio = lambda0 / lam
        return math.inf if ratio > 1.0 else (1.0 if ratio == 1.0 else 0.0)
    log_base = math.log(lambda0) - alpha * math.log(lam)
    try:
        return math.exp(2.0 / (1.0 - alpha) * log_base)
    except OverflowError:
        return math.inf


def conjugate_bound(a: float, b: float, lambda0: float, lam: float, alpha: float) -> float:
    """Right-hand side a^2/2 + lam b + (lambda0/lam^alpha)^(2/(1-alpha))/2, which
    dominates lambda0 a^(1-alpha) b^alpha."""
    if a < 0 or b < 0:
        raise ParameterError("a and b must be nonnegative")
    return 0.5 * a * a + lam * b + 0.5 * tuning_term(lambda0, lam, alpha)


def conjugate_lhs(a: float, b: float, lambda0: float, alpha: float) -> float:
    return lambda0 * a ** (1.0 - alpha) * b**alpha


# ---------------------------------------------------------------------------
# phi^2(6, S1) with a per-design cache
# ---------------------------------------------------------------------------

_PHI_CACHE: "weakref.WeakKeyDictionary[DesignMatrix, dict]" = weakref.WeakKeyDictionary()


def phi2(design: DesignMatrix, S1: Sequence[int], L: float = 6.0, opts: SolverOptions | None = None) -> tuple[float, float]:
    """(value, certified lower bound) of phi^2(L, S1); dependent columns give 0."""
    key = (tuple(sorted(S1)), float(L))
    cache = _PHI_CACHE.setdefault(design, {})
    if key not in cache:
        try:
            res = compatibility(design, key[0], L, opts)
            cache[key] = (res.value, res.status.lower_bound)
        except DegenerateError:
            cache[key] = (0.0, 0.0)
    return cache[key]


def _subsets(S: Sequence[int]):
    S = sorted(S)
    for k in range(len(S) + 1):
        for combo in itertools.combinations(S, k):
            yield combo


# ---------------------------------------------------------------------------
# the bound
# ---------------------------------------------------------------------------

def theorem_rhs(
    design: DesignMatrix,
    f0,
    partition: SupportPartition,
    lam: float,
    lambda0: float,
    alpha: float,
    *,
    phi2_value: float | None = None,
    projection: ProjectionResult | None = None,
    rule: str = "given",
    c: float = 1.0,
) -> OracleReport:
    """Evaluate the four right-hand-side terms.

    phi^2(6, S1) defaults to the solver's certified lower bound, so the
    returned total never understates the bound. An empty S1 contributes no
    estimation term.
    """
    if not (lam > 0 and lambda0 > 0):
        raise ParameterError("lambda and lambda0 must be positive")
    partition.validate(design.p)
    proj = projection if projection is not None else project(design, partition.S, f0)
    flags = []
    if proj.rank_deficient:
        flags.append("projection_rank_deficient")
    s1 = partition.s1
    ph = None
    if s1 == 0:
        est = 0.0
    else:
        ph = phi2_value if phi2_value is not None else phi2(design, partition.S1)[1]
        if ph <= 0.0:
            est = math.inf
            flags.append("phi2_degenerate")
        else:
            est = 56.0 * lam * lam * s1 / ph
    b_S2 = float(np.sum(np.abs(proj.bS[list(partition.S2)]))) if partition.S2 else 0.0
    terms = {
        "estimation": est,
        "ell1": 28.0 / 3.0 * lam * b_S2,
        "tuning": 7.0 / 6.0 * tuning_term(lambda0, lam, alpha),
        "approx": 7.0 * proj.approx_error**2,
    }
    total = math.fsum(terms.values()) if all(math.isfinite(v) for v in terms.values()) else math.inf
    return OracleReport(
        lam=float(lam),
        lambda0=float(lambda0),
        alpha=float(alpha),
        partition=partition,
        rhs_terms=terms,
        rhs_total=total,
        estimation_error_ES=estimation_value(design, partition, proj, lam, "remark", ph),
        rule=rule,
        c=c,
        phi2=ph,
        flags=flags,
    )


def estimation_value(design, partition: SupportPartition, proj: ProjectionResult, lam: float,
                     scale: str = "remark", phi2_value: float | None = None) -> float:
    c_est, c_l1 = SCALES[scale]
    b_S2 = float(np.sum(np.abs(proj.bS[list(partition.S2)]))) if partition.S2 else 0.0
    if partition.s1 == 0:
        first = 0.0
    else:
        ph = phi2_value if phi2_value is not None else phi2(design, partition.S1)[1]
        first = math.inf if ph <= 0 else c_est * lam * lam * partition.s1 / ph
    return first + c_l1 * lam * b_S2


def estimation_error(
    design: DesignMatrix, f0, S: Sequence[int], lam: float, *, scale: str = "remark",
    projection: ProjectionResult | None = None,
) -> tuple[float, SupportPartition]:
    """E(S) = min over S1 of c1 lam^2 s1/phi^2(6,S1) + c2 lam ||(b^S)_{S2}||_1.

    Ties go to smaller s1, then the lexicographically smaller S1.
    """
    S = sorted(int(i) for i in S)
    if len(S) > PARTITION_CAP:
        raise CapacityError(f"|S|={len(S)} exceeds the partition cap {PARTITION_CAP}")
    if scale not in SCALES:
        raise ParameterError(f"scale must be one of {sorted(SCALES)}")
    proj = projection if projection is not None else project(design, S, f0)
    best = None
    for S1 in _subsets(S):  # already ordered by size, then lexicographically
        part = SupportPartition.from_S1(S, S1)
        val = estimation_value(design, part, proj, lam, scale)
        if best is None or val < best[0]:
            best = (val, part)
    return best


# ---------------------------------------------------------------------------
# lambda rules
# ---------------------------------------------------------------------------

def lambda_classic(design: DesignMatrix, S1: Sequence[int], lambda0: float, alpha: float, c: float = 1.0) -> float:
    """lam = c lambda0 (phi^2(6,S1)/s1)^((1-alpha)/2)."""
    S1 = sorted(S1)
    if not S1:
        raise ParameterError("S1 must be nonempty for the classic rule")
    value = phi2(design, S1)[0]
    if value <= 0:
        raise DegenerateError(f"phi^2(6, S1) = 0 for S1 = {[i + 1 for i in S1]}")
    return c * lambda0 * (value / len(S1)) ** ((1.0 - alpha) / 2.0)


def lambda_slow(b_norm: float, lambda0: float, alpha: float, c: float = 1.0) -> float:
    """lam = c lambda0^(2/(1+alpha)) ||b||_1^(-(1-alpha)/(1+alpha)); alpha = 1 needs c > 1."""
    if alpha == 1.0:
        if not c > 1.0:
            raise ParameterError("with alpha = 1 the slow-rate rule needs lambda > lambda0, i.e. c > 1")
        return c * lambda0
    if not b_norm > 0:
        raise ParameterError("||(b^S)_{S2}||_1 = 0: the slow-rate rule is undefined, use lambda_classic")
    return c * lambda0 ** (2.0 / (1.0 + alpha)) * b_norm ** (-(1.0 - alpha) / (1.0 + alpha))


@dataclass
class TradeoffResult:
    lam: float
    partition: SupportPartition
    balanced: bool
    distance: float


def lambda_tradeoff(design: DesignMatrix, f0, S: Sequence[int], lambda0: float, alpha: float,
                    c: float = 1.0) -> TradeoffResult:
    """Pick the split balancing lambda0^(2/(1+alpha)) s1/phi^2 against ||(b^S)_{S2}||_1^(2/(1+alpha)).

    Only splits with both S1 and (b^S)_{S2} nonzero can balance. ``balanced``
    is False when the best log-ratio exceeds log 10; with nothing to balance
    the rule falls back to S1 = S.
    """
    S = sorted(int(i) for i in S)
    if len(S) > PARTITION_CAP:
        raise CapacityError(f"|S|={len(S)} exceeds the partition cap {PARTITION_CAP}")
    proj = project(design, S, f0)
    e = 2.0 / (1.0 + alpha)
    # coefficients at rounding level count as zero: nothing to balance against
    b_floor = 1e-12 * max(1.0, float(np.sum(np.abs(proj.bS))))
    best = None
    for S1 in _subsets(S):
        if not S1:
            continue
        part = SupportPartition.from_S1(S, S1)
        b2 = float(np.sum(np.abs(proj.bS[list(part.S2)]))) if part.S2 else 0.0
        ph = phi2(design, S1)[0]
        if b2 <= b_floor or ph <= 0:
            continue
        dist = abs(e * math.log(lambda0) + math.log(len(S1) / ph) - e * math.log(b2))
        if best is None or dist < best[0]:
            best = (dist, part, ph)
    if best is None:
        part = SupportPartition.from_S1(S, S)
        ph = phi2(design, S)[0]
        dist, balanced = math.inf, False
    else:
        dist, part, ph = best
        balanced = dist <= math.log(10.0)
    if ph <= 0:
        raise DegenerateError("phi^2(6, S1) = 0 for the selected split")
    lam = c * lambda0 * (part.s1**2 / ph) ** ((1.0 - alpha) / 2.0)
    return TradeoffResult(lam=lam, partition=part, balanced=balanced, distance=dist)


# ---------------------------------------------------------------------------
# oracle set search
# ---------------------------------------------------------------------------

def default_lambda_grid(design: DesignMatrix, f0, lambda0: float, num: int = 32) -> np.ndarray:
    dual = float(np.max(np.abs(design.X.T @ np.asarray(f0, dtype=float))) / design.n)
    hi = 10.0 * max(lambda0, 2.0 * dual)
    return np.geomspace(lambda0 / 10.0, hi, num)


@dataclass
class OracleSearchResult:
    S_star: tuple[int, ...]
    lambda_star: float
    objective: float
    report: OracleReport
    table: list[dict]


def oracle_search(design: DesignMatrix, f0, lambda0: float, alpha: float, candidates, lambda_grid=None) -> OracleSearchResult:
    """Minimize E(S) + ||f_S - f0||^2 over candidates, then the lambda objective over the grid.

    Ties go to the smaller lambda, then the lexicographically smaller S.
    """
    cands = [tuple(sorted(int(i) for i in S)) for S in candidates]
    if not cands:
        raise InputError("no candidate index sets")
    grid = sorted(float(x) for x in (default_lambda_grid(design, f0, lambda0) if lambda_grid is None else lambda_grid))
    if not grid or grid[0] <= 0:
        raise InputError("lambda grid must be nonempty and positive")
    for S in cands:
        if len(S) > PARTITION_CAP:
            raise CapacityError(f"candidate of size {len(S)} exceeds the partition cap {PARTITION_CAP}")
    projs = {S: project(design, S, f0) for S in cands}
    best = None
    table = []
    for lam in grid:
        inner = None
        for S in sorted(cands):
            es, part = estimation_error(design, f0, S, lam, projection=projs[S])
            val = es + projs[S].approx_error**2
            if inner is None or val < inner[0]:
                inner = (val, S, part)
        val, S, part = inner
        obj = val + tuning_term(lambda0, lam, alpha) / 6.0
        table.append({"lambda": lam, "S_star": [i + 1 for i in S], "objective": obj})
        if best is None or obj < best[0]:
            best = (obj, lam, S, part)
    obj, lam, S, part = best
    report = theorem_rhs(design, f0, part, lam, lambda0, alpha, projection=projs[S], rule="oracle_search")
    return OracleSearchResult(S_star=S, lambda_star=lam, objective=obj, report=report, table=table)
