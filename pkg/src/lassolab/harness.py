"""Noise models, T_alpha statistics and Monte Carlo checks of the oracle inequality.

Per-draw seeds come from ``mix64(master_seed, i)``, a splitmix64 finalizer
applied to ``master_seed + (i + 1) * 0x9E3779B97F4A7C15`` (mod 2^64) with
multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB and shifts 30, 27, 31.
Draw i therefore sees the same randomness no matter which thread runs it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .design import DesignMatrix
from .entropy import EntropyBoundParams, subgaussian_sigma0_gaussian
from .errors import DimensionError, DomainError, InputError, NumericError, ParameterError
from .geometry import SupportPartition
from .lasso import FitOptions, fit
from . import oracle

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

NOISE_KINDS = ("gaussian", "bounded_uniform", "rademacher")
CERT_TOL = 1e-6


def mix64(seed: int, index: int) -> int:
    z = (int(seed) + (int(index) + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & MASK64)


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """i.i.d. noise with a sub-Gaussian certificate (K, sigma0).

    ``scale`` is sigma for gaussian, the half-width R of U[-R, R] for
    bounded_uniform and the magnitude of the +-scale values for rademacher.
    For gaussian noise K defaults to 2 sigma and sigma0 is the exact minimum;
    bounded kinds use K = scale and sigma0^2 = K^2 (e - 1).
    """

    kind: str = "gaussian"
    scale: float = 1.0
    K: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind {self.kind!r}; choose from {', '.join(NOISE_KINDS)}")
        if not self.scale >= 0:
            raise ParameterError("noise scale must be nonnegative")
        if self.kind != "gaussian" and self.K is not None and self.K != self.scale:
            raise ParameterError("bounded noise kinds use K = scale")
        lhs, rhs = self.certificate_check()
        if lhs > rhs + CERT_TOL:
            raise DomainError(f"sub-Gaussian certificate fails: {lhs} > {rhs}")

    @property
    def K_cert(self) -> float:
        if self.kind == "gaussian":
            if self.K is not None:
                return float(self.K)
            return 2.0 * self.scale if self.scale > 0 else 1.0
        return self.scale if self.scale > 0 else 1.0

    @property
    def sigma0(self) -> float:
        K = self.K_cert
        if self.kind == "gaussian":
            return math.sqrt(subgaussian_sigma0_gaussian(self.scale, K))
        return K * math.sqrt(math.e - 1.0) if self.scale > 0 else 0.0

    def certificate_check(self) -> tuple[float, float]:
        """(K^2 (E exp(eps^2/K^2) - 1), sigma0^2), the moment by quadrature or exact sum."""
        K, s = self.K_cert, self.scale
        if s == 0:
            return 0.0, self.sigma0**2
        if self.kind == "gaussian":
            # integrand is the N(0, s^2) density times exp(x^2/K^2)
            a = 1.0 / (2.0 * s * s) - 1.0 / (K * K)
            if a <= 0:
                raise DomainError(f"E exp(eps^2/K^2) diverges for K={K}, sigma={s}")
            val, _ = integrate.quad(lambda x: math.exp(-a * x * x), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
            moment = val / (math.sqrt(2.0 * math.pi) * s)
        elif self.kind == "bounded_uniform":
            val, _ = integrate.quad(lambda x: math.exp(x * x / (K * K)), -s, s, epsabs=1e-13, epsrel=1e-12)
            moment = val / (2.0 * s)
        else:
            moment = math.exp(s * s / (K * K))
        return K * K * (moment - 1.0), self.sigma0**2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale, "K": self.K_cert, "sigma0": self.sigma0}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        K = d.get("K")
        kind = d.get("kind", "gaussian")
        return cls(kind=kind, scale=float(d.get("scale", 1.0)), K=None if K is None or kind != "gaussian" else float(K))


def draw_noise(model: NoiseModel, n: int, seed: int) -> np.ndarray:
    rng = _rng(seed)
    if model.kind == "gaussian":
        return model.scale * rng.standard_normal(n)
    if model.kind == "bounded_uniform":
        return rng.uniform(-model.scale, model.scale, n)
    return model.scale * (2.0 * rng.integers(0, 2, n) - 1.0)


# ---------------------------------------------------------------------------
# T_alpha statistics
# ---------------------------------------------------------------------------

def _check_eps(design: DesignMatrix, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (design.n,):
        raise DimensionError(f"noise must have length n={design.n}")
    return eps


def talpha_statistic(design: DesignMatrix, eps, beta, alpha: float) -> float:
    """4 |eps^T f_b| / n divided by ||f_b||_n^(1-alpha) ||b||_1^alpha."""
    eps = _check_eps(design, eps)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.p,):
        raise DimensionError(f"beta must have length p={design.p}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0, 1]")
    l1 = float(np.sum(np.abs(beta)))
    if l1 == 0.0:
        raise InputError("the ratio is undefined at beta = 0")
    f = design.X @ beta
    num = 4.0 * abs(float(eps @ f)) / design.n
    fn = math.sqrt(float(f @ f) / design.n)
    den = fn ** (1.0 - alpha) * l1**alpha
    if den == 0.0:
        return 0.0
    return num / den


def talpha_sup_alpha1(design: DesignMatrix, eps) -> float:
    eps = _check_eps(design, eps)
    return float(4.0 * np.max(np.abs(design.X.T @ eps)) / design.n)


def _ratios(B: np.ndarray, c: np.ndarray, G: np.ndarray, alpha: float) -> np.ndarray:
    """Rows of B are coefficient vectors; c = X^T eps / n."""
    l1 = np.sum(np.abs(B), axis=-1)
    q = np.sum((B @ G) * B, axis=-1)
    num = 4.0 * np.abs(B @ c)
    # f_b numerically zero: eps^T f_b is zero too, so report 0 rather than noise/0
    flat = q <= 1e-14 * l1 * l1
    den = np.where(flat, 1.0, np.sqrt(np.where(flat, 1.0, q)) ** (1.0 - alpha) * l1**alpha)
    return np.where(flat | (l1 == 0), 0.0, num / den)


def talpha_sup_estimate(design: DesignMatrix, eps, alpha: float, budget: int = 256, seed: int = 0,
                        *, ascent_steps: int = 200, ascent_starts: int = 10) -> float:
    """Lower bound on sup over b != 0 of the T_alpha ratio.

    Evaluates all vertices e_j, ``budget`` random points of the l1 sphere and
    then runs sign-aware coordinate ascent (moves b +- h e_j, h halved when
    nothing improves) from the best ``ascent_starts`` points. The ratio is
    invariant to rescaling b, so no renormalization is needed.
    """
    eps = _check_eps(design, eps)
    if not 0.0 <= alpha < 1.0:
        raise ParameterError("alpha must lie in [0, 1)")
    p = design.p
    G = design.gram
    c = design.X.T @ eps / design.n
    if not np.any(c):
        return 0.0
    rng = _rng(seed)
    cands = [np.eye(p)]
    if budget > 0:
        # one row of uniforms per sample, so a larger budget extends a smaller one;
        # normalized exponentials are flat-Dirichlet magnitudes
        U = rng.random((budget, 2 * p))
        mags = -np.log1p(-U[:, :p])
        mags /= mags.sum(axis=1, keepdims=True)
        cands.append(np.where(U[:, p:] < 0.5, -mags, mags))
    B = np.vstack(cands)
    vals = _ratios(B, c, G, alpha)
    best = float(vals.max())
    if ascent_steps <= 0:
        return best
    top = np.argsort(-vals, kind="stable")[:ascent_starts]
    Z = B[top] / np.sum(np.abs(B[top]), axis=1, keepdims=True)
    cur = vals[top]
    h = np.full(len(top), 0.25)
    moves = np.vstack([np.eye(p), -np.eye(p)])
    for _ in range(ascent_steps):
        trial = Z[:, None, :] + h[:, None, None] * moves[None, :, :]
        tv = _ratios(trial, c, G, alpha)
        k = np.argmax(tv, axis=1)
        gain = tv[np.arange(len(top)), k]
        up = gain > cur
        if np.any(up):
            nz = trial[np.arange(len(top)), k]
            nz = nz / np.maximum(np.sum(np.abs(nz), axis=1, keepdims=True), 1e-300)
            Z[up] = nz[up]
            cur[up] = gain[up]
        h = np.where(up, np.minimum(2.0 * h, 1.0), 0.5 * h)
        if np.all(h < 1e-12):
            break
    return max(best, float(cur.max()))


# ---------------------------------------------------------------------------
# lambda rules
# ---------------------------------------------------------------------------

RULES = ("classic", "slow", "tradeoff", "fixed")


def parse_rule(rule: str) -> tuple[str, float | None]:
    if rule.startswith("fixed:"):
        try:
            v = float(rule.split(":", 1)[1])
        except ValueError as exc:
            raise ParameterError(f"bad fixed lambda in {rule!r}") from exc
        if not v > 0:
            raise ParameterError("fixed lambda must be positive")
        return "fixed", v
    if rule not in RULES[:3]:
        raise ParameterError(f"unknown lambda rule {rule!r}; use classic, slow, tradeoff or fixed:<value>")
    return rule, None


def select_lambda(design: DesignMatrix, f0, S, rule: str, lambda0: float, alpha: float, c: float = 1.0,
                  projection: oracle.ProjectionResult | None = None) -> tuple[float, SupportPartition]:
    """lambda from a named rule, plus the split that rule is tied to."""
    kind, value = parse_rule(rule)
    S = tuple(sorted(S))
    if kind == "fixed":
        return value, SupportPartition.from_S1(S, S)
    if kind == "classic":
        return oracle.lambda_classic(design, S, lambda0, alpha, c), SupportPartition.from_S1(S, S)
    if kind == "slow":
        proj = projection if projection is not None else oracle.project(design, S, f0)
        b = float(np.sum(np.abs(proj.bS)))
        return oracle.lambda_slow(b, lambda0, alpha, c), SupportPartition.from_S1(S, ())
    res = oracle.lambda_tradeoff(design, f0, S, lambda0, alpha, c)
    return res.lam, res.partition


# ---------------------------------------------------------------------------
# verification run
# ---------------------------------------------------------------------------

@dataclass
class MCReport:
    master_seed: int
    draws: int
    records: list[dict]
    aggregates: dict
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "master_seed": self.master_seed,
            "draws": self.draws,
            "config": self.config,
            "aggregates": self.aggregates,
            "records": self.records,
        }


PER_DRAW = "per_draw"
PARTITION_SCAN_LIMIT = 8


def _best_rhs(design, f0, S, lam, lambda0, alpha, proj, rule_part: SupportPartition, scan: bool):
    parts = [rule_part]
    if scan:
        parts = [SupportPartition.from_S1(S, S1) for S1 in oracle._subsets(S)]
    best = None
    for part in parts:
        rep = oracle.theorem_rhs(design, f0, part, lam, lambda0, alpha, projection=proj)
        if best is None or rep.rhs_total < best.rhs_total:
            best = rep
    return best


def verify_run(
    design: DesignMatrix,
    f0=None,
    S=(),
    noise: NoiseModel | None = None,
    alpha: float = 1.0,
    lambda0: float | str | EntropyBoundParams = PER_DRAW,
    lambda_rule: str = "classic",
    draws: int = 100,
    master_seed: int = 0,
    *,
    beta0=None,
    c: float = 1.0,
    threads: int = 1,
    sup_budget: int = 64,
    ascent_steps: int = 50,
    fit_options: FitOptions | None = None,
) -> MCReport:
    """Check the oracle inequality draw by draw on the pointwise noise certificate.

    ``lambda0`` is a number, an EntropyBoundParams (its lambda0 is used and
    its failure bound reported) or ``"per_draw"``, meaning the exact alpha = 1
    statistic of each draw. The inequality holds for every split of S, so the
    right-hand side is minimized over all splits when |S| <= 8 and evaluated
    at the rule's split otherwise. A draw counts as a violation when the
    certificate passes, the fit converged and lhs > rhs (1 + 1e-9).
    """
    noise = noise or NoiseModel()
    if beta0 is not None:
        if f0 is not None:
            raise InputError("give f0 or beta0, not both")
        f0 = design.X @ np.asarray(beta0, dtype=float)
    if f0 is None:
        raise InputError("f0 or beta0 is required")
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (design.n,):
        raise DimensionError(f"f0 must have length n={design.n}")
    S = tuple(sorted(int(i) for i in S))
    if not S:
        raise InputError("S must be nonempty")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0, 1]")
    if draws < 1:
        raise ParameterError("draws must be positive")
    params = lambda0 if isinstance(lambda0, EntropyBoundParams) else None
    per_draw = isinstance(lambda0, str)
    if per_draw and lambda0 != PER_DRAW:
        raise ParameterError(f"lambda0 must be a number or {PER_DRAW!r}")
    if per_draw and alpha != 1.0:
        raise ParameterError("per-draw lambda0 uses the exact alpha = 1 statistic; set alpha = 1")
    lam0_fixed = params.lambda0 if params else (None if per_draw else float(lambda0))
    if lam0_fixed is not None and not lam0_fixed > 0:
        raise ParameterError("lambda0 must be positive")
    proj = oracle.project(design, S, f0)
    scan = len(S) <= PARTITION_SCAN_LIMIT
    opts = fit_options or FitOptions()
    X = design.X
    n = design.n

    fixed = None
    if not per_draw:
        lam, part = select_lambda(design, f0, S, lambda_rule, lam0_fixed, alpha, c, proj)
        fixed = (lam, _best_rhs(design, f0, S, lam, lam0_fixed, alpha, proj, part, scan))
    else:
        # warm the compatibility cache before threads start
        for S1 in (oracle._subsets(S) if scan else [S]):
            if S1:
                oracle.phi2(design, S1)

    def one(i: int) -> dict:
        seed_i = mix64(master_seed, i)
        eps = draw_noise(noise, n, seed_i)
        sup1 = talpha_sup_alpha1(design, eps)
        if per_draw:
            lam0 = max(sup1, 1e-300)
            lam, part = select_lambda(design, f0, S, lambda_rule, lam0, alpha, c, proj)
            rep = _best_rhs(design, f0, S, lam, lam0, alpha, proj, part, scan)
        else:
            lam0 = lam0_fixed
            lam, rep = fixed
        res = fit(design, f0 + eps, lam, opts)
        d = res.beta_hat - proj.bS
        fhat = X @ res.beta_hat
        r = fhat - f0
        d1 = float(np.sum(np.abs(d)))
        lhs = float(r @ r) / n + lam * d1
        fd = X @ d
        if d1 == 0.0:
            cert = True
        else:
            cert_lhs = 4.0 * abs(float(eps @ fd)) / n
            cert_rhs = lam0 * math.sqrt(float(fd @ fd) / n) ** (1.0 - alpha) * d1**alpha
            cert = cert_lhs <= cert_rhs
        if alpha == 1.0:
            glob = sup1
        else:
            glob = talpha_sup_estimate(design, eps, alpha, sup_budget, mix64(seed_i, 0), ascent_steps=ascent_steps)
        rhs = rep.rhs_total
        return {
            "draw": i,
            "lambda": lam,
            "lambda0": lam0,
            "converged": bool(res.converged),
            "talpha_pointwise_ok": bool(cert),
            "talpha_global_estimate": glob,
            "lhs": lhs,
            "rhs": rhs,
            "S1": [j + 1 for j in rep.partition.S1],
            "violation": bool(cert and res.converged and lhs > rhs * (1.0 + 1e-9)),
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(draws)))
    else:
        records = [one(i) for i in range(draws)]

    certified = [r for r in records if r["talpha_pointwise_ok"] and r["converged"]]
    globs = np.array([r["talpha_global_estimate"] for r in records])
    lam0s = np.array([r["lambda0"] for r in records])
    agg = {
        "violations_given_certificate": sum(r["violation"] for r in records),
        "certified_draws": len(certified),
        "unconverged_draws": sum(not r["converged"] for r in records),
        "pointwise_failures": sum(not r["talpha_pointwise_ok"] for r in records),
        "empirical_talpha_failure_rate": float(np.mean(globs > lam0s)),
        "bound_exp_minus_t2_times_1_plus_2_over_B": params.failure_bound if params else None,
        "lambda0_used": None if per_draw else lam0_fixed,
        "lambda0_theoretical": params.lambda0 if params else None,
        "lambda0_empirical_p95": float(np.percentile(globs, 95)),
        "max_lhs_over_rhs": max((r["lhs"] / r["rhs"] for r in records if r["rhs"] > 0 and math.isfinite(r["rhs"])), default=None),
    }
    config = {
        "S": [j + 1 for j in S],
        "alpha": alpha,
        "lambda_rule": lambda_rule,
        "c": c,
        "noise": noise.to_dict(),
        "lambda0": lambda0 if per_draw else lam0_fixed,
        "entropy_params": params.to_dict() if params else None,
    }
    return MCReport(master_seed=int(master_seed), draws=int(draws), records=records, aggregates=agg, config=config)


# ---------------------------------------------------------------------------
# probability of the noise event
# ---------------------------------------------------------------------------

def sup_statistics(design: DesignMatrix, noise: NoiseModel, alpha: float, draws: int, master_seed: int, *,
                   budget: int = 64, ascent_steps: int = 50, threads: int = 1) -> np.ndarray:
    def one(i):
        seed_i = mix64(master_seed, i)
        eps = draw_noise(noise, design.n, seed_i)
        if alpha == 1.0:
            return talpha_sup_alpha1(design, eps)
        return talpha_sup_estimate(design, eps, alpha, budget, mix64(seed_i, 0), ascent_steps=ascent_steps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, range(draws))))
    return np.array([one(i) for i in range(draws)])


def probability_check(
    design: DesignMatrix,
    entropy_params: EntropyBoundParams | None = None,
    draws: int = 1000,
    master_seed: int = 0,
    *,
    alpha: float | None = None,
    lambda0: float | None = None,
    noise: NoiseModel | None = None,
    budget: int = 64,
    ascent_steps: int = 50,
    threads: int = 1,
) -> dict:
    """Frequency of {sup statistic > lambda0} against exp(-t^2) (1 + 2/B).

    ``alpha`` defaults to the entropy parameters' alpha; alpha = 1 uses the
    exact statistic, alpha < 1 the search lower bound (so the reported
    frequency lower-bounds the true one). lambda0 defaults to the
    theoretical value from ``entropy_params``.
    """
    noise = noise or NoiseModel()
    if alpha is None:
        if entropy_params is None:
            raise ParameterError("give alpha or entropy_params")
        alpha = entropy_params.alpha
    if lambda0 is None:
        if entropy_params is None:
            raise ParameterError("give lambda0 or entropy_params")
        lambda0 = entropy_params.lambda0
    if not lambda0 > 0:
        raise ParameterError("lambda0 must be positive")
    if entropy_params is not None and entropy_params.n != design.n:
        raise DimensionError(f"entropy params were built for n={entropy_params.n}, design has n={design.n}")
    stats = sup_statistics(design, noise, alpha, draws, master_seed, budget=budget, ascent_steps=ascent_steps, threads=threads)
    if not np.all(np.isfinite(stats)):
        raise NumericError("non-finite sup statistic")
    freq = float(np.mean(stats > lambda0))
    p95 = float(np.percentile(stats, 95))
    bound = entropy_params.failure_bound if entropy_params else None
    out = {
        "schema": 1,
        "master_seed": int(master_seed),
        "draws": int(draws),
        "alpha": alpha,
        "exact_sup": alpha == 1.0,
        "noise": noise.to_dict(),
        "lambda0": float(lambda0),
        "failure_frequency": freq,
        "bound": bound,
        "tolerance": None,
        "within_bound": None,
        "lambda0_empirical_p95": p95,
        "failure_frequency_at_p95": float(np.mean(stats > p95)),
        "entropy_params": entropy_params.to_dict() if entropy_params else None,
    }
    if bound is not None:
        q = min(bound, 1.0)
        out["tolerance"] = 3.0 * math.sqrt(q * (1.0 - q) / draws)
        out["within_bound"] = bool(freq <= bound + out["tolerance"])
    return out
