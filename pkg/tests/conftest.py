import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lassolab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("lassolab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_normalized(rng, n, p):
    from lassolab.design import DesignMatrix

    X = rng.standard_normal((n, p))
    X /= np.sqrt(np.sum(X * X, axis=0) / n)
    return DesignMatrix(X)


def gram_design(G, n=None):
    """Design whose Gram matrix is exactly G (G must be PSD)."""
    from lassolab.design import DesignMatrix

    w, V = np.linalg.eigh(G)
    w = np.clip(w, 0, None)
    p = G.shape[0]
    n = n or p
    X = np.zeros((n, p))
    X[:p, :] = np.sqrt(n) * (V * np.sqrt(w)).T
    return DesignMatrix(X, rescale=True)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one pass/fail line per acceptance criterion."""

    def record(k: int, ok: bool, detail: str) -> None:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[k] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
