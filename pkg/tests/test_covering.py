import itertools
import math
import warnings

import numpy as np
import pytest

from lassolab.covering import (
    corr,
    covering_exact,
    covering_profile,
    decorrelation,
    default_radii,
    distance_matrix,
    greedy_packing,
    min_cover_size,
    points,
)
from lassolab.design import DesignMatrix, generate
from lassolab.errors import ApproximationWarning, CapacityError, DomainError, ParameterError

from conftest import random_normalized


def exhaustive_cover(D, u, targets=None):
    k = D.shape[0]
    targets = range(D.shape[1]) if targets is None else targets
    for size in range(1, k + 1):
        for centers in itertools.combinations(range(k), size):
            if all(min(D[c, t] for c in centers) <= u for t in targets):
                return size
    return 0


def exhaustive_mis(G, rho):
    p = G.shape[0]
    for size in range(p, 0, -1):
        for sub in itertools.combinations(range(p), size):
            if all(abs(G[a, b]) < rho for a, b in itertools.combinations(sub, 2)):
                return size
    return 0


def test_corr_examples():
    d = generate("equicorrelated", 30, 4, {"r": 0.5}, seed=1)
    assert corr(d, 1, 1) == pytest.approx(1.0)
    assert corr(d, 0, 3) == pytest.approx(0.5, abs=1e-10)
    o = generate("orthonormal", 10, 3, seed=1)
    assert corr(o, 0, 2) == pytest.approx(0.0, abs=1e-12)


def test_distance_identity(rng):
    d = random_normalized(rng, 25, 6)
    D = distance_matrix(d)
    np.testing.assert_allclose(D**2, 2 * (1 - d.gram), atol=1e-12)
    P = points(d, include_signs=True)
    direct = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1) / d.n)
    np.testing.assert_allclose(distance_matrix(d, True), direct, atol=1e-12)


def test_greedy_packing_examples():
    X = np.tile(np.array([1.0, -1, 1, -1])[:, None], (1, 5))
    assert len(greedy_packing(DesignMatrix(X), 0.1)) == 1
    o = generate("orthonormal", 8, 4, seed=0)
    assert len(greedy_packing(o, 1.0)) == 4
    assert len(greedy_packing(o, 2.01)) == 1
    with pytest.raises(ParameterError):
        greedy_packing(o, 0.0)


def test_greedy_packing_is_maximal_packing_and_cover(rng):
    for _ in range(20):
        d = random_normalized(rng, 10, 7)
        for signs in (False, True):
            D = distance_matrix(d, signs)
            for u in (0.3, 0.8, 1.3):
                J = greedy_packing(d, u, signs)
                assert all(D[a, b] >= u for a, b in itertools.combinations(J, 2))
                assert np.all(D[:, J].min(axis=1) < u + 1e-12)


def test_covering_exact_examples():
    d = DesignMatrix(np.array([[1.0], [0.0]]))
    assert covering_exact(d, 0.1) == 1
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    two = DesignMatrix(X)
    dist = distance_matrix(two)[0, 1]
    assert covering_exact(two, dist) == 1
    assert covering_exact(two, dist * 0.99) == 2
    with pytest.raises(CapacityError):
        covering_exact(generate("orthonormal", 20, 7, seed=0), 0.5, include_signs=True)


def test_covering_exact_matches_exhaustive(rng):
    for _ in range(10):
        d = random_normalized(rng, 8, 6)
        D = distance_matrix(d)
        for u in (0.4, 0.9, 1.2, 1.5):
            assert covering_exact(d, u) == exhaustive_cover(D, u)
        Ds = distance_matrix(d, True)
        for u in (0.9, 1.3):
            assert min_cover_size(Ds, u) == exhaustive_cover(Ds, u)


def test_decorrelation_examples():
    d = generate("equicorrelated", 30, 5, {"r": 0.5}, seed=2)
    assert decorrelation(d, 0.6) == 5
    assert decorrelation(d, 0.4) == 1
    o = generate("orthonormal", 10, 4, seed=1)
    assert all(decorrelation(o, r) == 4 for r in (0.01, 0.5, 1.0))
    with pytest.raises(ParameterError):
        decorrelation(o, 0.0)
    with pytest.raises(DomainError):
        decorrelation(DesignMatrix(0.5 * o.X), 0.5)


def test_decorrelation_matches_exhaustive(rng):
    for _ in range(15):
        d = random_normalized(rng, 6, 8)
        for rho in (0.2, 0.5, 0.8, 1.0):
            assert decorrelation(d, rho) == exhaustive_mis(d.gram, rho)


def test_decorrelation_greedy_fallback_warns(rng):
    d = random_normalized(rng, 10, 12)
    with pytest.warns(ApproximationWarning):
        m = decorrelation(d, 0.5, exact_limit=5)
    assert 1 <= m <= decorrelation(d, 0.5)


def test_corrected_decorrelation_covering_bound(rng):
    # a maximal decorrelated set D covers +-psi_j via D u -D: N <= 2 M on the signed set
    for _ in range(30):
        p = int(rng.integers(2, 7))
        d = random_normalized(rng, int(rng.integers(3, 12)), p)
        for u in (0.3, 0.5, 0.7):
            assert covering_exact(d, math.sqrt(2) * u, include_signs=True) <= 2 * decorrelation(d, 1 - u * u)


def test_profile_invariants(rng):
    for _ in range(10):
        d = random_normalized(rng, 12, 5)
        prof = covering_profile(d, include_signs=True)
        assert prof.radii == sorted(default_radii())
        assert all(b <= a for a, b in zip(prof.packing_sizes, prof.packing_sizes[1:]))
        # radii ascend, so sizes are nonincreasing along the list
        assert all(e <= c for e, c in zip(prof.covering_exact, prof.covering_upper))
        ms = [prof.decorrelation[r] for r in sorted(prof.decorrelation)]
        assert all(b >= a for a, b in zip(ms, ms[1:]))
        out = prof.to_dict()
        assert out["schema"] == 1 and set(out) >= {"radii", "packing", "covering_upper", "covering_exact", "decorrelation"}
        assert prof.covering_at(0.01) == prof.n_points


def test_profile_without_exact_for_large_sets(rng):
    d = random_normalized(rng, 12, 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        prof = covering_profile(d, include_signs=True)
    assert prof.covering_exact is None
