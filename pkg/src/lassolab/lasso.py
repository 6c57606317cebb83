"""l1-penalized least squares: ||y - X b||_2^2 / n + lam * ||b||_1.

Note the convention: squared loss divided by n with no factor 1/2, so the
stationarity condition reads 2 psi_j^T (X b - y) / n + lam * sign(b_j) = 0 and
the all-zero solution is optimal iff lam >= 2 max_j |psi_j^T y| / n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .design import DesignMatrix
from .errors import DimensionError, InputError, NumericError, ParameterError

DEFAULT_KKT_TOL = 1e-8
DEFAULT_MAX_ITERS = 100_000


@dataclass
class LassoFit:
    beta_hat: np.ndarray
    lam: float
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool


@dataclass
class FitOptions:
    max_iters: int = DEFAULT_MAX_ITERS
    kkt_tol: float = DEFAULT_KKT_TOL
    step_tol: float = 0.0
    init: np.ndarray | None = field(default=None, repr=False)


def _check(design: DesignMatrix, y, beta=None):
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise DimensionError(f"y must have length n={design.n}, got shape {y.shape}")
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (design.p,):
            raise DimensionError(f"beta must have length p={design.p}, got shape {beta.shape}")
    return y, beta


def soft_threshold(z: float, t: float) -> float:
    if t < 0:
        raise ParameterError("threshold must be nonnegative")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def objective(design: DesignMatrix, y, beta, lam: float) -> float:
    y, beta = _check(design, y, beta)
    r = y - design.X @ beta
    return float(np.dot(r, r) / design.n + lam * np.sum(np.abs(beta)))


def _kkt_from_grad(grad: np.ndarray, beta: np.ndarray, lam: float) -> float:
    # grad = 2 X^T (X b - y) / n
    active = beta != 0
    viol = np.where(active, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(np.max(viol)) if viol.size else 0.0


def kkt_residual(design: DesignMatrix, y, beta, lam: float) -> float:
    y, beta = _check(design, y, beta)
    grad = 2.0 * design.X.T @ (design.X @ beta - y) / design.n
    return _kkt_from_grad(grad, beta, lam)


_CONVERGED, _MAX_ITERS, _STALLED, _INCREASED = 0, 1, 2, 3


@njit(cache=True)
def _cd_sweeps(G, c, yy, diag, beta, lam, max_iters, kkt_tol, step_tol):
    """Run sweeps in place on ``beta``; returns (sweeps, status)."""
    p = beta.size
    half = 0.5 * lam
    r = c - G @ beta
    prev = yy - 2.0 * (c @ beta) + beta @ (G @ beta) + lam * np.sum(np.abs(beta))
    it = 0
    while it < max_iters:
        it += 1
        max_step = 0.0
        for j in range(p):
            if diag[j] <= 0.0:
                continue
            bj = beta[j]
            z = r[j] + diag[j] * bj
            if z > half:
                nb = (z - half) / diag[j]
            elif z < -half:
                nb = (z + half) / diag[j]
            else:
                nb = 0.0
            d = nb - bj
            if d != 0.0:
                beta[j] = nb
                for k in range(p):
                    r[k] -= G[j, k] * d
                if abs(d) > max_step:
                    max_step = abs(d)
        cur = yy - 2.0 * (c @ beta) + beta @ (G @ beta) + lam * np.sum(np.abs(beta))
        if cur > prev + 1e-12 * max(1.0, abs(prev)):
            return it, _INCREASED
        prev = cur
        kkt = 0.0
        for j in range(p):
            g = -2.0 * r[j]
            if beta[j] > 0.0:
                v = abs(g + lam)
            elif beta[j] < 0.0:
                v = abs(g - lam)
            else:
                v = max(abs(g) - lam, 0.0)
            if v > kkt:
                kkt = v
        if kkt <= kkt_tol:
            return it, _CONVERGED
        if max_step <= step_tol:
            return it, _STALLED
    return it, _MAX_ITERS


def fit(design: DesignMatrix, y, lam: float, opts: FitOptions | None = None, **kwargs) -> LassoFit:
    """Cyclic coordinate descent in ascending index order.

    Works on the Gram matrix: with c = X^T y / n and r = c - G b, the exact
    coordinate minimizer is soft_threshold(r_j + G_jj b_j, lam / 2) / G_jj.
    Returns ``converged=False`` instead of raising when ``max_iters`` sweeps
    are exhausted.
    """
    opts = opts or FitOptions(**kwargs)
    y, _ = _check(design, y)
    if not np.all(np.isfinite(y)):
        raise InputError("response contains NaN or infinite entries")
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    G = design.gram
    c = design.X.T @ y / design.n
    yy = float(np.dot(y, y) / design.n)
    p = design.p
    diag = np.diag(G).copy()
    beta = np.zeros(p) if opts.init is None else np.array(opts.init, dtype=float)
    if beta.shape != (p,):
        raise DimensionError(f"init must have length p={p}")
    it = 0
    for _ in range(3):
        done, status = _cd_sweeps(G, c, yy, diag, beta, float(lam), opts.max_iters - it, opts.kkt_tol, opts.step_tol)
        it += done
        if status == _INCREASED:
            raise NumericError(f"objective increased during coordinate-descent sweep {it}")
        # the kernel's running residual drifts; certify from scratch
        kkt = kkt_residual(design, y, beta, lam)
        if status != _CONVERGED or kkt <= opts.kkt_tol:
            break
    return LassoFit(
        beta_hat=beta,
        lam=float(lam),
        objective=objective(design, y, beta, lam),
        kkt_residual=kkt,
        iterations=it,
        converged=kkt <= opts.kkt_tol,
    )


def lambda_max(design: DesignMatrix, y) -> float:
    """Smallest lambda for which the zero vector is optimal."""
    y, _ = _check(design, y)
    return float(2.0 * np.max(np.abs(design.X.T @ y)) / design.n)
