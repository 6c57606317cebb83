import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lassolab.config import dumps
from lassolab.design import DesignMatrix, generate
from lassolab.entropy import EntropyBoundParams
from lassolab.errors import DomainError, InputError, ParameterError
from lassolab.harness import (
    NoiseModel,
    draw_noise,
    mix64,
    parse_rule,
    probability_check,
    talpha_statistic,
    talpha_sup_alpha1,
    talpha_sup_estimate,
    verify_run,
)
from lassolab.lasso import FitOptions

from conftest import random_normalized


def test_mix64_matches_splitmix64_reference():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert mix64(0, 0) == 0xE220A8397B1DCDAF
    assert mix64(0, 1) == 0x6E789E6AA1B965F4
    assert mix64(2**64 - 1, 0) != mix64(0, 0)


def test_draw_noise_examples():
    g = NoiseModel("gaussian", 1.0)
    a = draw_noise(g, 50, 7)
    assert a.tobytes() == draw_noise(g, 50, 7).tobytes()
    big = draw_noise(g, 100_000, 11)
    assert abs(big.var() - 1.0) <= 0.02
    r = draw_noise(NoiseModel("rademacher", 1.0), 1000, 3)
    assert set(np.unique(r)) == {-1.0, 1.0}
    u = draw_noise(NoiseModel("bounded_uniform", 2.0), 1000, 3)
    assert np.all(np.abs(u) <= 2.0)


@pytest.mark.parametrize("kind,scale,K", [
    ("gaussian", 1.0, None), ("gaussian", 0.5, 3.0), ("gaussian", 0.0, None),
    ("bounded_uniform", 2.0, None), ("rademacher", 0.7, None),
])
def test_noise_certificates(kind, scale, K):
    m = NoiseModel(kind, scale, K)
    lhs, rhs = m.certificate_check()
    assert lhs <= rhs + 1e-6
    assert NoiseModel.from_dict(m.to_dict()).to_dict() == m.to_dict()


def test_noise_errors():
    with pytest.raises(ParameterError):
        NoiseModel("cauchy")
    with pytest.raises(DomainError):
        NoiseModel("gaussian", 1.0, K=1.0)
    with pytest.raises(ParameterError):
        NoiseModel("rademacher", 1.0, K=2.0)


def test_rademacher_certificate_is_tight():
    m = NoiseModel("rademacher", 1.3)
    lhs, rhs = m.certificate_check()
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_talpha_statistic_examples(rng):
    d = generate("orthonormal", 10, 3, seed=1)
    Q, _ = np.linalg.qr(np.hstack([d.X, rng.standard_normal((10, 1))]))
    eps = Q[:, 3]
    assert talpha_statistic(d, eps, np.array([1.0, -2.0, 0.5]), 0.5) == pytest.approx(0.0, abs=1e-12)
    e = rng.standard_normal(10)
    for j in range(3):
        b = np.zeros(3)
        b[j] = 1.0
        assert talpha_statistic(d, e, b, 1.0) == pytest.approx(4 * abs(e @ d.X[:, j]) / 10)
    with pytest.raises(InputError):
        talpha_statistic(d, e, np.zeros(3), 0.5)


def test_talpha_statistic_zero_signal():
    X = np.ones((4, 2)) * 0.5
    d = DesignMatrix(X)
    assert talpha_statistic(d, np.ones(4), np.array([1.0, -1.0]), 0.5) == 0.0


@given(st.integers(0, 10_000))
def test_talpha_nonincreasing_in_alpha(seed):
    rng = np.random.default_rng(seed)
    d = DesignMatrix(rng.uniform(-1, 1, (12, 5)))
    eps = rng.standard_normal(12)
    b = rng.standard_normal(5)
    b /= np.sum(np.abs(b))
    vals = [talpha_statistic(d, eps, b, a) for a in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(y <= x * (1 + 1e-12) for x, y in zip(vals, vals[1:]))


def test_talpha_sup_alpha1_examples(rng):
    d = generate("orthonormal", 10, 4, seed=2)
    assert talpha_sup_alpha1(d, d.X[:, 0]) == pytest.approx(4 * (d.X[:, 0] @ d.X[:, 0]) / 10)
    assert talpha_sup_alpha1(d, d.X[:, 0]) == pytest.approx(4.0)
    assert talpha_sup_alpha1(d, np.zeros(10)) == 0.0
    e = rng.standard_normal(10)
    perm = rng.permutation(4)
    assert talpha_sup_alpha1(DesignMatrix(d.X[:, perm]), e) == talpha_sup_alpha1(d, e)


def test_talpha_sup_estimate_examples(rng):
    d = generate("ar1_toeplitz", 40, 8, {"r": 0.8}, seed=3)
    e = rng.standard_normal(40)
    assert talpha_sup_estimate(d, e, 1 - 1e-9, 16, seed=1) >= talpha_sup_alpha1(d, e) * (1 - 1e-6)
    assert talpha_sup_estimate(d, np.zeros(40), 0.5, 16) == 0.0
    vals = [talpha_sup_estimate(d, e, 0.5, b, seed=4, ascent_steps=0) for b in (0, 10, 100, 1000)]
    assert all(y >= x for x, y in zip(vals, vals[1:]))
    # every estimate is attained by some beta, so it is a lower bound on the statistic's sup
    assert talpha_sup_estimate(d, e, 0.5, 64, seed=5) >= vals[0]
    with pytest.raises(ParameterError):
        talpha_sup_estimate(d, e, 1.0, 10)


def test_parse_rule():
    assert parse_rule("fixed:0.25") == ("fixed", 0.25)
    assert parse_rule("classic") == ("classic", None)
    for bad in ("fixed:x", "fixed:-1", "cv"):
        with pytest.raises(ParameterError):
            parse_rule(bad)


def test_verify_noiseless():
    d = generate("equicorrelated", 50, 8, {"r": 0.5}, seed=4)
    beta0 = np.array([1.0, -1.0, 0.5, 0, 0, 0, 0, 0])
    rep = verify_run(d, S=(0, 1, 2), noise=NoiseModel("gaussian", 0.0), alpha=1.0, lambda0=0.01,
                     lambda_rule="fixed:0.02", draws=5, master_seed=1, beta0=beta0)
    assert all(r["talpha_pointwise_ok"] for r in rep.records)
    assert rep.aggregates["violations_given_certificate"] == 0
    assert all(r["lhs"] <= r["rhs"] for r in rep.records)


def test_verify_alpha1_event_enforced():
    d = generate("ar1_toeplitz", 60, 10, {"r": 0.7}, seed=5)
    beta0 = np.zeros(10)
    beta0[:3] = [1.5, -1, 0.5]
    beta0[5] = 0.1
    rep = verify_run(d, S=(0, 1, 2), noise=NoiseModel("gaussian", 0.5), alpha=1.0, lambda0="per_draw",
                     lambda_rule="classic", c=2.0, draws=1000, master_seed=9, beta0=beta0)
    agg = rep.aggregates
    assert agg["violations_given_certificate"] == 0
    assert agg["pointwise_failures"] == 0
    assert agg["certified_draws"] == 1000


def test_verify_deterministic_across_threads():
    d = generate("duplicated_blocks", 40, 8, {"blocks": 2}, seed=6)
    beta0 = np.zeros(8)
    beta0[:2] = [1.0, -0.5]
    kw = dict(S=(0, 1), noise=NoiseModel("gaussian", 0.3), alpha=0.5, lambda0=0.3, lambda_rule="classic",
              draws=12, master_seed=3, beta0=beta0)
    a = dumps(verify_run(d, threads=1, **kw).to_dict())
    b = dumps(verify_run(d, threads=3, **kw).to_dict())
    assert a == b
    json.loads(a)


def test_verify_flags_unconverged():
    d = generate("duplicated_blocks", 40, 8, {"blocks": 2}, seed=6)
    rep = verify_run(d, S=(0,), noise=NoiseModel("gaussian", 1.0), alpha=1.0, lambda0=0.05, lambda_rule="fixed:0.01",
                     draws=3, master_seed=1, beta0=np.eye(8)[0], fit_options=FitOptions(max_iters=1))
    assert rep.aggregates["unconverged_draws"] == 3
    assert rep.aggregates["violations_given_certificate"] == 0


def test_verify_input_errors():
    d = generate("orthonormal", 10, 3, seed=0)
    with pytest.raises(InputError):
        verify_run(d, S=(0,), draws=1)
    with pytest.raises(InputError):
        verify_run(d, np.zeros(10), S=(), draws=1)
    with pytest.raises(ParameterError):
        verify_run(d, np.zeros(10), S=(0,), alpha=0.5, lambda0="per_draw", draws=1)


def test_probability_check_examples():
    d = generate("orthonormal", 40, 10, seed=2)
    rep = probability_check(d, None, 200, 1, alpha=1.0, lambda0=1e9)
    assert rep["failure_frequency"] == 0.0
    rep = probability_check(d, None, 4000, 2, alpha=1.0, lambda0=1.0)
    assert rep["failure_frequency_at_p95"] == pytest.approx(0.05, abs=0.01)
    with pytest.raises(ParameterError):
        probability_check(d, None, 10, 1, alpha=1.0)


def test_failure_bound_t_doubling():
    for t in (0.5, 1.0, 2.0):
        a = EntropyBoundParams(alpha=0.5, A=2.0, K=1.0, sigma0=1.0, t=t, n=100)
        b = EntropyBoundParams(alpha=0.5, A=2.0, K=1.0, sigma0=1.0, t=2 * t, n=100)
        assert b.failure_bound / a.failure_bound == pytest.approx(math.exp(-3 * t * t), rel=1e-12)
