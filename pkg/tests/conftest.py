import numpy as np
import pytest

from svecmsh.model import Dataset, ModelParameters, build_free_entry_map


def moment_check(draws, mean, var, fourth_central=None, k=4.0):
    """Assert the first two raw moments lie within k standard errors of their targets."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    m1 = x.mean()
    se1 = np.sqrt(var / n)
    assert abs(m1 - mean) < k * se1, (m1, mean, se1)
    raw2 = var + mean**2
    m2 = np.mean(x**2)
    # Var(X^2) estimated from the sample; fine once the fourth moment is finite.
    se2 = np.std(x**2) / np.sqrt(n)
    assert abs(m2 - raw2) < k * se2, (m2, raw2, se2)


def random_params(rng, n=2, p=2, r=1, k_restricted=0, k_unrestricted=1, scale=0.1):
    fmap = build_free_entry_map(n)
    alpha = scale * rng.standard_normal((n, r))
    beta = rng.standard_normal((n + k_restricted, r))
    gamma = scale * rng.standard_normal((n * (p - 1) + k_unrestricted, n))
    b = 0.3 * rng.standard_normal(fmap.d_b)
    lam1 = rng.uniform(0.5, 2.0, n)
    lam2 = rng.uniform(0.1, 1.0, n)
    return ModelParameters(alpha, beta, gamma, b, lam1, lam2, 0.9, 0.8, p, fmap)


def random_dataset(rng, n=2, p=2, T=60, k_restricted=0, k_unrestricted=1):
    y = np.cumsum(rng.standard_normal((T + p, n)), axis=0)
    d = rng.standard_normal((T + p, k_restricted))
    D = np.ones((T + p, k_unrestricted))
    return Dataset(y, p, d, D)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
