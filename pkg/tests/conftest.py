import numpy as np
import pytest

from mvassoc.model import TraitMatrix


def correlated_traits(n: int, k: int, rho: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    cov = np.full((k, k), rho)
    np.fill_diagonal(cov, 1.0)
    return rng.standard_normal((n, k)) @ np.linalg.cholesky(cov).T


@pytest.fixture
def small_data():
    """n=300, K=3 CS(0.5) traits with a genotype carrying a weak effect on trait 1."""
    rng = np.random.default_rng(11)
    x = rng.binomial(2, 0.3, 300).astype(float)
    y = correlated_traits(300, 3, 0.5, 12)
    y[:, 0] += 0.15 * x
    return TraitMatrix.from_raw(y + 5.0), x
