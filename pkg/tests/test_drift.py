import numpy as np
import pytest

from monotone_spde import graphs
from monotone_spde.drift import (GraphExact, Mollified, Yosida, make_substep)

from conftest import bisection_resolvent


def test_graph_substep_solves_inclusion(rng):
    g = graphs.Cubic()
    sub = make_substep(g, GraphExact(), 1e-3)
    y = rng.standard_normal((6, 16))
    x = sub.apply(y)
    assert np.max(np.abs(x + 1e-3 * x ** 3 - y)) <= 1e-13
    xi = sub.xi(y, x)
    assert np.max(np.abs(xi - x ** 3)) <= 1e-10


def test_graph_substep_scalar_oracle():
    # the drift half-step alone against the monotone-root oracle
    g = graphs.Cubic()
    sub = make_substep(g, GraphExact(), 0.25)
    for x0 in (2.0, -1.3, 0.0):
        got = float(sub.apply(np.asarray([x0]))[0])
        assert got == pytest.approx(bisection_resolvent(g, 0.25, x0), abs=1e-11)


def test_yosida_substep_identity(rng):
    """(I + dt beta_lam)^{-1} via the exact two-parameter resolvent identity
    agrees with direct root finding on x + dt beta_lam(x) = y."""
    g = graphs.Sinh()
    lam, dt = 0.2, 0.05
    sub = make_substep(g, Yosida(lam), dt)
    y = rng.uniform(-3.0, 3.0, size=40)
    x = sub.apply(y)
    blam = (x - g.resolvent(lam, x)) / lam
    assert np.max(np.abs(x + dt * blam - y)) <= 1e-12


def test_yosida_substep_derivative_fd(rng):
    g = graphs.Cubic()
    sub = make_substep(g, Yosida(0.1), 1e-2)
    y = np.asarray([0.8, -2.0, 0.05])
    x = sub.apply(y)
    d = sub.derivative(y, x)
    fd = (sub.apply(y + 1e-7) - sub.apply(y - 1e-7)) / 2e-7
    assert np.max(np.abs(d - fd)) <= 1e-7
    d2 = sub.second_derivative(y, x)
    fd2 = (sub.apply(y + 1e-5) - 2 * x + sub.apply(y - 1e-5)) / 1e-10
    assert np.max(np.abs(d2 - fd2)) <= 1e-4


def test_mollified_substep_table():
    g = graphs.Cubic()
    sub = make_substep(g, Mollified(0.1, 8), 1e-3)
    assert sub.table_error <= sub.ERROR_GATE
    y = np.linspace(-3.0, 3.0, 101)
    x = sub.apply(y)
    f = graphs.mollified_drift(sub.reg, g, x)
    assert np.max(np.abs(x + 1e-3 * f - y)) <= 1e-10
    # derivatives are the table's own, so they match FD of the applied map
    yy = np.asarray([-1.1, 0.2, 1.7])
    xx = sub.apply(yy)
    fd = (sub.apply(yy + 1e-7) - sub.apply(yy - 1e-7)) / 2e-7
    assert np.max(np.abs(sub.derivative(yy, xx) - fd)) <= 1e-6
    fd2 = (sub.apply(yy + 1e-5) - 2 * xx + sub.apply(yy - 1e-5)) / 1e-10
    assert np.max(np.abs(sub.second_derivative(yy, xx) - fd2)) <= 1e-4


def test_mollified_substep_outside_table_fallback():
    g = graphs.Cubic()
    sub = make_substep(g, Mollified(0.1, 8), 1e-3)
    y = np.asarray([sub.RANGE + 5.0])
    x = sub.apply(y)
    f = graphs.mollified_drift(sub.reg, g, x)
    assert float(np.abs(x + 1e-3 * f - y)[0]) <= 1e-10


def test_substep_cache_reuse():
    g = graphs.Cubic()
    a = make_substep(g, Mollified(0.2, 4), 1e-3)
    b = make_substep(graphs.Cubic(), Mollified(0.2, 4), 1e-3)
    assert a is b  # same parameters, same compiled table


def test_make_substep_validation():
    with pytest.raises(ValueError):
        make_substep(graphs.Cubic(), GraphExact(), 0.0)
    with pytest.raises(TypeError):
        make_substep(graphs.Cubic(), "nope", 1e-3)
