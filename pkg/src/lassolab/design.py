"""Design matrices, empirical norms, Gram spectrum and synthetic design families.

Columns are the feature vectors psi_j evaluated at the n inputs. Every
quantity downstream depends on the design only through these columns, and
mostly only through the Gram matrix ``X.T @ X / n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DegenerateError, DimensionError, InputError, NumericError, ParameterError

# slack for the standing assumption ||psi_j||_n <= 1 on ingestion
NORM_SLACK = 1e-12

FAMILIES = ("orthonormal", "equicorrelated", "ar1_toeplitz", "duplicated_blocks", "spiked_decay")


class DesignMatrix:
    """Immutable n x p design with lazily cached Gram matrix and spectrum.

    Construction rejects columns with ``||psi_j||_n > 1`` unless
    ``rescale=True``, in which case offending columns are shrunk to unit
    empirical norm.
    """

    def __init__(self, X, *, rescale: bool = False):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DimensionError(f"design must be a non-empty 2-d array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InputError("design contains non-finite entries")
        n = X.shape[0]
        norms = np.sqrt(np.sum(X * X, axis=0) / n)
        too_big = norms > 1.0 + NORM_SLACK
        if np.any(too_big):
            if not rescale:
                j = int(np.flatnonzero(too_big)[0])
                raise InputError(
                    f"column {j + 1} has empirical norm {norms[j]:.6g} > 1; "
                    "rescale explicitly (rescale=True / --rescale)"
                )
            X[:, too_big] /= norms[too_big]
        X.setflags(write=False)
        self._X = X

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def p(self) -> int:
        return self._X.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        G = self._X.T @ self._X / self.n
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        return G

    @cached_property
    def column_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self._X * self._X, axis=0) / self.n)

    @cached_property
    def spectrum(self) -> "SpectralProfile":
        return spectral(self)

    def column(self, j: int) -> np.ndarray:
        return self._X[:, j]

    def is_normalized(self, tol: float = 1e-10) -> bool:
        return bool(np.all(np.abs(self.column_norms - 1.0) <= tol))

    def __repr__(self):
        return f"DesignMatrix(n={self.n}, p={self.p})"


@dataclass(frozen=True)
class SpectralProfile:
    """Eigen-decomposition ``gram = E diag(eigenvalues) E^T``, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def omegas(self) -> np.ndarray:
        """Square roots of the eigenvalues (the singular values of X / sqrt(n))."""
        return np.sqrt(np.clip(self.eigenvalues, 0.0, None))


def empirical_norm(design: DesignMatrix, v) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (design.n,):
        raise DimensionError(f"expected vector of length n={design.n}, got shape {v.shape}")
    return float(np.sqrt(np.dot(v, v) / design.n))


def predict(design: DesignMatrix, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.p,):
        raise DimensionError(f"expected coefficients of length p={design.p}, got shape {beta.shape}")
    return design.X @ beta


def spectral(design: DesignMatrix) -> SpectralProfile:
    G = design.gram
    try:
        w, V = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver failed to converge: {exc}") from exc
    # descending, ties by original (ascending-order) index
    order = np.lexsort((np.arange(w.size), -w))
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    # sign convention: largest-magnitude entry of each eigenvector is positive
    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V = V * signs
    return SpectralProfile(eigenvalues=w, eigenvectors=V)


def normalize(design: DesignMatrix) -> DesignMatrix:
    norms = design.column_norms
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateError(f"column {int(zero[0]) + 1} is identically zero")
    if design.is_normalized(tol=1e-12):
        return design  # idempotent: no second rounding pass
    return DesignMatrix(design.X / norms)


# ---------------------------------------------------------------------------
# synthetic families
# ---------------------------------------------------------------------------

def _orthonormal_frame(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """n x k matrix with orthonormal columns (k <= n)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.sign(np.diag(R))


def _from_gram(target: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Return X with X^T X / n equal to ``target`` (best rank-n version when p > n)."""
    w, V = np.linalg.eigh(target)
    order = np.argsort(-w, kind="stable")
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    k = min(n, target.shape[0])
    Q = _orthonormal_frame(rng, n, k)
    return np.sqrt(n) * (Q * np.sqrt(w[:k])) @ V[:, :k].T


def equicorrelated_gram(p: int, r: float) -> np.ndarray:
    if p > 1 and not (-1.0 / (p - 1) < r < 1.0):
        raise ParameterError(f"equicorrelation r={r} must lie in (-1/(p-1), 1) for p={p}")
    return (1.0 - r) * np.eye(p) + r * np.ones((p, p))


def ar1_gram(p: int, r: float) -> np.ndarray:
    if not -1.0 < r < 1.0:
        raise ParameterError(f"AR(1) correlation r={r} must lie in (-1, 1)")
    idx = np.arange(p)
    return r ** np.abs(idx[:, None] - idx[None, :])


def generate(kind: str, n: int, p: int, params: Mapping | None = None, seed: int = 0) -> DesignMatrix:
    """Build a synthetic design; a pure function of its arguments.

    Families and their ``params``:

    - ``orthonormal``: Gram = I exactly (needs p <= n).
    - ``equicorrelated``: ``r``; Gram has unit diagonal and off-diagonal r.
    - ``ar1_toeplitz``: ``r``; Gram entries r^|j-k|.
    - ``duplicated_blocks``: ``blocks`` (default 4), ``jitter`` (default 0.05);
      columns in a block are one random direction plus jitter, normalized.
    - ``spiked_decay``: ``m`` (default 1), ``C`` (default 1); Gram eigenvalues
      (C / j^m)^2 with random eigenvectors, columns shrunk to norm <= 1.

    Gram-specified families are built as sqrt(n) Q Sigma^{1/2} from a random
    orthonormal frame Q, so their Gram matrix is exact rather than sampled.
    """
    params = dict(params or {})
    if n < 1 or p < 1:
        raise ParameterError(f"n and p must be positive, got n={n}, p={p}")
    if kind not in FAMILIES:
        raise ParameterError(f"unknown design family {kind!r}; choose from {', '.join(FAMILIES)}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))

    if kind == "orthonormal":
        if p > n:
            raise ParameterError(f"orthonormal design needs p <= n (p={p}, n={n})")
        X = np.sqrt(n) * _orthonormal_frame(rng, n, p)
    elif kind == "equicorrelated":
        X = _from_gram(equicorrelated_gram(p, float(params.get("r", 0.5))), n, rng)
    elif kind == "ar1_toeplitz":
        X = _from_gram(ar1_gram(p, float(params.get("r", 0.5))), n, rng)
    elif kind == "duplicated_blocks":
        blocks = int(params.get("blocks", 4))
        jitter = float(params.get("jitter", 0.05))
        if not 1 <= blocks <= p:
            raise ParameterError(f"blocks must lie in [1, p], got {blocks}")
        if jitter < 0:
            raise ParameterError("jitter must be nonnegative")
        base = rng.standard_normal((n, blocks))
        labels = np.arange(p) % blocks
        X = base[:, labels] + jitter * rng.standard_normal((n, p))
        X = X / np.sqrt(np.sum(X * X, axis=0) / n)
    else:
        m = float(params.get("m", 1.0))
        C = float(params.get("C", 1.0))
        if m <= 0 or C <= 0:
            raise ParameterError("spiked_decay needs m > 0 and C > 0")
        omega = C / np.arange(1, p + 1) ** m
        E = _orthonormal_frame(rng, p, p)
        X = _from_gram((E * omega**2) @ E.T, n, rng)

    # exact-Gram constructions can overshoot unit norm by rounding
    norms = np.sqrt(np.sum(X * X, axis=0) / n)
    over = norms > 1.0
    X[:, over] /= norms[over]
    return DesignMatrix(X)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def read_csv(path, *, rescale: bool = False) -> DesignMatrix:
    try:
        X = np.loadtxt(Path(path), delimiter=",", ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise InputError(f"cannot parse design CSV {path}: {exc}") from exc
    return DesignMatrix(X, rescale=rescale)


def write_csv(design: DesignMatrix, path) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in design.X]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
