import numpy as np
import pytest

from oim.dataset import CONTINUOUS, Dataset, DatasetPair


def make_loan_pair(
    n: int,
    r: float,
    beta: float = 1.0,
    noise: float = 0.0,
    base_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DatasetPair:
    """Loan-interest example: u = base - x1 (+ noise), y = u + beta * z.

    z is Rademacher, x2 = r z + sqrt(1 - r^2) eps so corr(x2, z) = r exactly in
    distribution, and x1 is independent standard normal.
    """
    rng = rng or np.random.default_rng(0)
    z = rng.choice([-1, 1], size=n)
    x1 = rng.standard_normal(n)
    x2 = r * z + np.sqrt(1.0 - r**2) * rng.standard_normal(n)
    nu = noise * rng.standard_normal(n) if noise else np.zeros(n)
    u = base_rate - x1 + nu
    y = u + beta * z
    X = np.column_stack([x1, x2])
    clean = Dataset(X=X, z=z, y=u, outcome=CONTINUOUS)
    perturbed = Dataset(X=X, z=z, y=y, outcome=CONTINUOUS)
    return DatasetPair(clean=clean, perturbed=perturbed, kind="direct")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
