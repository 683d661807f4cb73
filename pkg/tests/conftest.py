import os

import numpy as np
import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def pcp_instance(seed=1, m=200, n=200, rank=5, density=0.05, magnitude=50.0):
    """Low-rank ``X @ Y.T`` plus a sparse matrix of uniform gross errors."""
    rng = np.random.default_rng(seed)
    L0 = rng.standard_normal((m, rank)) @ rng.standard_normal((n, rank)).T
    S0 = np.zeros(m * n)
    support = rng.choice(m * n, size=int(round(density * m * n)), replace=False)
    S0[support] = rng.uniform(-magnitude, magnitude, support.size)
    S0 = S0.reshape(m, n)
    return L0, S0


def low_rank_plus_sparse(rng, m, n, r, k, scale=1.0, magnitude=(5.0, 10.0)):
    L0 = scale * rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    S0 = np.zeros(m * n)
    pos = rng.choice(m * n, size=k, replace=False)
    S0[pos] = rng.uniform(*magnitude, size=k) * rng.choice([-1.0, 1.0], size=k)
    return L0, S0.reshape(m, n)


@pytest.fixture(scope="session")
def pcp_problem():
    L0, S0 = pcp_instance()
    return L0, S0, L0 + S0


@pytest.fixture(scope="session")
def ialm_solution(pcp_problem):
    from dlam.batch import pcp_ialm
    from dlam.model import DlamConfig
    _, _, A = pcp_problem
    return pcp_ialm(A, DlamConfig("ialm"))


@pytest.fixture(scope="session")
def ealm_solution(pcp_problem):
    from dlam.batch import pcp_ealm
    from dlam.model import DlamConfig
    _, _, A = pcp_problem
    return pcp_ealm(A, DlamConfig("ealm"))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
