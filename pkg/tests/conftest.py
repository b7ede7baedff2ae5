import numpy as np
import pytest

from nnireg.operators import DenseOperator, Preconditioner
from nnireg.seeding import child_rng
from nnireg.solvers import InverseProblem


def random_operator(rng, m, n, scale=1.0):
    return DenseOperator(scale * rng.standard_normal((m, n)))


def consistent_problem(rng, m, n, scale=0.5):
    """Injective operator with consistent non-negative data; returns
    (problem, xbar)."""
    while True:
        a = random_operator(rng, m, n, scale)
        svals = np.linalg.svd(a.entries, compute_uv=False)
        if svals[-1] > 1e-4 * svals[0]:
            break
    xbar = rng.uniform(0.0, 2.0, size=n)
    y = a.entries @ xbar
    p = InverseProblem(
        operator_noisy=a, data_noisy=y, operator_exact=a, data_exact=y
    )
    return p, xbar


@pytest.fixture
def rng():
    return child_rng(2024, "tests")


@pytest.fixture
def scalar_g():
    def make(mu, n):
        return Preconditioner.scalar(mu, n)

    return make
