"""Entropy bounds for {f_b : ||b||_1 = 1} and the constants behind lambda_0.

Sub-Gaussian noise in the sense K^2 (E exp(eps_i^2 / K^2) - 1) <= sigma0^2 plus
a polynomial entropy bound log(1 + 2 N(delta)) <= (A / delta)^(2 alpha) give

    K0      = 96 sqrt(K^2 + sigma0^2)
    B       = exp[A^(2 alpha) alpha / (2 (2^(1-alpha) - 1)^2)] - 1
    lambda0 = (4 K0 / sqrt(n)) (A^alpha / (2^(1-alpha) - 1) + t)

and the noise event fails with probability at most exp(-t^2) (1 + 2/B).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .covering import CoveringProfile
from .design import SpectralProfile
from .errors import DomainError, InputError

ENVELOPE_EPS = 1e-12


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class EntropyBoundParams:
    alpha: float
    A: float
    K: float
    sigma0: float
    t: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1) on the entropy route, got {self.alpha}")
        if self.A <= 0 or self.K <= 0 or self.t <= 0 or self.n < 1 or self.sigma0 < 0:
            raise DomainError("A, K, t, n must be positive and sigma0 nonnegative")

    @property
    def K0(self) -> float:
        return 3 * 2**5 * math.sqrt(self.K**2 + self.sigma0**2)

    @property
    def _denom(self) -> float:
        return 2.0 ** (1.0 - self.alpha) - 1.0

    @property
    def B(self) -> float:
        return _exp(self.A ** (2 * self.alpha) * self.alpha / (2.0 * self._denom**2)) - 1.0

    @property
    def lambda0(self) -> float:
        return 4.0 * self.K0 / math.sqrt(self.n) * (self.A**self.alpha / self._denom + self.t)

    @property
    def failure_bound(self) -> float:
        """exp(-t^2) (1 + 2/B)."""
        return math.exp(-self.t**2) * (1.0 + 2.0 / self.B)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "A": self.A,
            "K": self.K,
            "sigma0": self.sigma0,
            "t": self.t,
            "n": self.n,
            "K0": self.K0,
            "B": self.B,
            "lambda0": self.lambda0,
        }


def subgaussian_sigma0_gaussian(sigma: float, K: float) -> float:
    """Smallest sigma0^2 for N(0, sigma^2) noise: K^2 ((1 - 2 sigma^2/K^2)^(-1/2) - 1)."""
    if sigma < 0 or K <= 0:
        raise DomainError("sigma must be nonnegative and K positive")
    if K * K <= 2.0 * sigma * sigma:
        raise DomainError(f"E exp(eps^2/K^2) diverges: need K^2 > 2 sigma^2 (K={K}, sigma={sigma})")
    return K * K * ((1.0 - 2.0 * sigma * sigma / (K * K)) ** -0.5 - 1.0)


def derive_constants(params: EntropyBoundParams) -> tuple[float, float, float]:
    return params.K0, params.B, params.lambda0


def envelope_V(spectral: SpectralProfile) -> np.ndarray:
    """V(0..p) with V(j) = omega_{j+1} + eps (p - j); strictly decreasing, V(p) = 0."""
    omega = spectral.omegas
    p = omega.size
    V = np.empty(p + 1)
    V[:p] = omega + ENVELOPE_EPS * (p - np.arange(p))
    V[p] = 0.0
    return V


def envelope_inverse(V: np.ndarray, delta: float) -> int:
    """min { j >= 0 : V(j) <= delta }."""
    return int(np.flatnonzero(V <= delta)[0])


def entropy_from_eigenvalues(spectral: SpectralProfile, delta: float) -> float:
    """Bound on H(2 delta, {f_b : ||b||_1 = 1}, ||.||_n): V^{-1}(delta) log(3 / delta)."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    logterm = math.log(3.0 / delta)
    if logterm <= 0:
        return 0.0
    return envelope_inverse(envelope_V(spectral), delta) * logterm


def entropy_from_covering(profile: CoveringProfile, delta: float) -> float:
    """min over grid u in (0, 1) of 6 (N(u) + 6 u^2/delta^2) log(2 (8 + delta)/delta N(delta))."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    vals = profile.covering_exact if profile.covering_exact is not None else profile.covering_upper
    grid = [(u, N) for u, N in zip(profile.radii, vals) if 0.0 < u < 1.0]
    if not grid:
        raise InputError("covering profile has no radii in (0, 1)")
    logterm = math.log(2.0 * (8.0 + delta) / delta * profile.covering_at(delta))
    return min(6.0 * (N + 6.0 * u * u / (delta * delta)) * logterm for u, N in grid)


def polynomial_alpha_A(source: str, n: int, constant: float = 1.0, *, m: float | None = None,
                       W: float | None = None) -> tuple[float, float]:
    """(alpha, A) for polynomially decaying eigenvalues or polynomial coverings.

    ``source="eigen"`` needs ``m > 1/2`` and gives alpha = 1/(2m);
    ``source="cover"`` needs ``W > 0`` and gives alpha = W/(2+W). In both
    cases A = (constant^2 log n)^(1/(2 alpha)); ``constant`` is left to the
    caller because no value for it is pinned down.
    """
    if source == "eigen":
        if m is None or not m > 0.5:
            raise DomainError(f"eigenvalue route needs m > 1/2, got {m}")
        alpha = 1.0 / (2.0 * m)
    elif source == "cover":
        if W is None or not W > 0:
            raise DomainError(f"covering route needs W > 0, got {W}")
        alpha = W / (2.0 + W)
    else:
        raise DomainError(f"unknown source {source!r}; use 'eigen' or 'cover'")
    if n <= 1 or constant <= 0:
        raise DomainError("need n > 1 and a positive constant")
    A = (constant**2 * math.log(n)) ** (1.0 / (2.0 * alpha))
    return alpha, A


def entropy_table(spectral: SpectralProfile, profile: CoveringProfile, deltas, n: int) -> list[dict]:
    rows = []
    for delta in deltas:
        rows.append({
            "delta": float(delta),
            "eigen_bound": entropy_from_eigenvalues(spectral, delta),
            "cover_bound": entropy_from_covering(profile, delta),
            "below_1_over_n": bool(delta < 1.0 / n),
        })
    return rows

