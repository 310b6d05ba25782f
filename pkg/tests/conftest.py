import numpy as np
import pytest

from monotone_spde import graphs
from monotone_spde.noise import NoiseModel
from monotone_spde.space import TripleSpace


@pytest.fixture(scope="session")
def space64():
    return TripleSpace(64)


@pytest.fixture(scope="session")
def space32():
    return TripleSpace(32)


@pytest.fixture(scope="session")
def cubic():
    return graphs.Cubic()


@pytest.fixture(scope="session")
def noise_default():
    return NoiseModel(b0=0.5, gamma=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)


def bisection_resolvent(graph, lam, s, iters=200):
    """Independent oracle: pure bisection for x + lam*beta0(x) = s."""
    lo, hi = min(0.0, s), max(0.0, s)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = mid + lam * float(graph.beta0(np.asarray(mid))) - s
        if f > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def grid_conjugate(graph, s, r_max, n=200_001):
    """Independent oracle: dense-grid maximization of s r - j(r), refined."""
    lo, hi = -r_max, r_max
    for _ in range(4):
        r = np.linspace(lo, hi, n)
        vals = s * r - graph.potential(r)
        i = int(np.argmax(vals))
        lo, hi = r[max(0, i - 2)], r[min(n - 1, i + 2)]
    r = np.linspace(lo, hi, n)
    return float(np.max(s * r - graph.potential(r)))


def sinh_series(x, terms=40):
    """Library-independent sinh via its Taylor series."""
    total, term = 0.0, x
    for j in range(terms):
        total += term
        term *= x * x / ((2 * j + 2) * (2 * j + 3))
    return total
