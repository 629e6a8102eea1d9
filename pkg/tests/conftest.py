import numpy as np
import pytest

from ebreg import Dataset, RegularizerSpec, WhitenedProblem, whiten


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_problem(rng, m, n=None, finite=None):
    """Random reduced problem; finite=True/False forces the gate branch."""
    n = int(rng.integers(1, 6)) if n is None else n
    y = rng.standard_normal(m)
    norm = np.linalg.norm(y)
    if norm == 0:
        y[0] = 1.0
        norm = 1.0
    if finite is True:
        y *= rng.uniform(1.15, 2.5) * np.sqrt(m) / norm
    elif finite is False:
        y *= rng.uniform(0.2, 0.95) * np.sqrt(m) / norm
    return WhitenedProblem(y_tilde=y, n=n, m=m)


def random_whitened_dataset(rng, n, m):
    design = whiten(rng.standard_normal((n, m))).transformed_design
    return Dataset(design=design, response=rng.standard_normal(n))


SPECS = {
    "ridge": RegularizerSpec.ridge(),
    "lasso": RegularizerSpec.lasso(),
    "group-lasso": RegularizerSpec.group_lasso(),
}
