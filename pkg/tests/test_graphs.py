import math

import numpy as np
import pytest

from monotone_spde import graphs
from monotone_spde.graphs import (Cubic, CubicPlusLinear, ExpAsymmetric,
                                  PiecewiseLinear, PolynomialOdd,
                                  RegularizedDrift, Sinh, SymmetryCertificate,
                                  SymmetryFailure, conjugate, minimal_section,
                                  mollified_drift, mollified_drift_deriv1,
                                  mollified_drift_deriv2, potential, resolvent,
                                  symmetry_certificate, yosida, zero_graph)

from conftest import bisection_resolvent, grid_conjugate, sinh_series

ALL_GRAPHS = [Cubic(), CubicPlusLinear(1.0, 1.0), Sinh(),
              PolynomialOdd((0.5, 0.0, 2.0)), ExpAsymmetric(),
              PiecewiseLinear([(0.0, -1.0), (0.0, 1.0)], 0.5, 2.0)]


# --- resolvent ---------------------------------------------------------------

def test_resolvent_cubic_examples():
    g = Cubic()
    assert resolvent(g, 1.0, 2.0) == pytest.approx(1.0, abs=1e-12)  # 1 + 1^3 = 2
    assert resolvent(g, 1.0, 0.0) == 0.0                            # 0 in beta(0)


def test_resolvent_sinh_vs_bisection_oracle():
    g = Sinh()
    x = resolvent(g, 0.5, 1.2)
    assert x == pytest.approx(bisection_resolvent(g, 0.5, 1.2), abs=1e-12)
    assert x + 0.5 * math.sinh(x) == pytest.approx(1.2, abs=1e-12)


@pytest.mark.parametrize("graph", ALL_GRAPHS, ids=lambda g: g.name)
def test_resolvent_nonexpansive(graph, rng):
    s = rng.uniform(-5.0, 5.0, size=(300, 2))
    x1 = graph.resolvent(0.37, s[:, 0])
    x2 = graph.resolvent(0.37, s[:, 1])
    assert np.all(np.abs(x1 - x2) <= np.abs(s[:, 0] - s[:, 1]) + 1e-11)


def test_resolvent_rejects_bad_input():
    g = Cubic()
    with pytest.raises(ValueError):
        resolvent(g, -1.0, 1.0)
    with pytest.raises(ValueError):
        resolvent(g, 1.0, float("nan"))
    with pytest.raises(ValueError):
        yosida(g, 1.0, float("inf"))


# --- yosida ------------------------------------------------------------------

def test_yosida_examples():
    g = Cubic()
    assert yosida(g, 1.0, 2.0) == pytest.approx(1.0, abs=1e-12)   # (2-1)/1
    for graph in ALL_GRAPHS:
        assert yosida(graph, 0.7, 0.0) == 0.0                     # resolvent fixes 0
    x = bisection_resolvent(g, 0.01, 2.0)
    val = yosida(g, 0.01, 2.0)
    assert val == pytest.approx((2.0 - x) / 0.01, abs=1e-8)
    assert 0.0 < val < 8.0


@pytest.mark.parametrize("graph", ALL_GRAPHS, ids=lambda g: g.name)
def test_yosida_below_minimal_section_and_monotone_in_lambda(graph, rng):
    s = rng.uniform(-4.0, 4.0, size=50)
    prev = None
    for lam in (1.0, 0.5, 0.1, 0.02):
        y = np.asarray(graph.resolvent(lam, s))
        ys = (s - y) / lam
        b0 = graph.beta0(s)
        assert np.all(np.abs(ys) <= np.abs(b0) + 1e-10)
        assert np.all(ys * s >= -1e-12)
        if prev is not None:
            # |beta_lam| nondecreasing as lambda decreases
            assert np.all(np.abs(ys) >= np.abs(prev) - 1e-10)
        prev = ys


# --- minimal section ---------------------------------------------------------

def test_minimal_section_examples():
    assert minimal_section(Cubic(), 2.0) == 8.0
    jump = PiecewiseLinear([(0.0, -1.0), (0.0, 1.0)], 1.0, 1.0)
    assert minimal_section(jump, 0.0) == 0.0
    assert minimal_section(Sinh(), 1.0) == pytest.approx(sinh_series(1.0), abs=1e-12)


def test_minimal_section_monotone(rng):
    for graph in ALL_GRAPHS:
        r = np.sort(rng.uniform(-6.0, 6.0, size=200))
        assert np.all(np.diff(graph.beta0(r)) >= -1e-12)


# --- potential / conjugate ---------------------------------------------------

def test_potential_conjugate_examples():
    g = Cubic()
    assert conjugate(g, 1.0) == pytest.approx(0.75, abs=1e-12)
    assert potential(g, 2.0) == 4.0
    s = Sinh()
    expected = 2.0 * math.asinh(2.0) - math.sqrt(5.0) + 1.0
    assert conjugate(s, 2.0) == pytest.approx(expected, abs=1e-12)
    assert conjugate(s, 2.0) == pytest.approx(grid_conjugate(s, 2.0, 6.0), abs=1e-9)


def test_numeric_conjugate_matches_grid_oracle():
    g = CubicPlusLinear(1.0, 1.0)
    for s in (0.0, 0.8, -2.4, 5.0):
        assert conjugate(g, s) == pytest.approx(grid_conjugate(g, s, 8.0), abs=1e-8)


def test_conjugate_domain_cap():
    with pytest.raises(ValueError):
        conjugate(CubicPlusLinear(1.0, 1.0), 2e6)


def test_conjugate_infinite_beyond_bounded_range():
    clamp = PiecewiseLinear([(-1.0, -1.0), (1.0, 1.0)], 0.0, 0.0)
    assert conjugate(clamp, 2.0) == math.inf
    assert conjugate(clamp, 0.5) < math.inf


@pytest.mark.parametrize("graph", ALL_GRAPHS, ids=lambda g: g.name)
def test_young_equality(graph, rng):
    r = rng.uniform(-3.0, 3.0, size=24)
    for ri in r:
        s = minimal_section(graph, float(ri))
        lhs = potential(graph, float(ri)) + conjugate(graph, s)
        assert lhs == pytest.approx(float(ri) * s, abs=1e-8)


@pytest.mark.parametrize("graph", [Cubic(), Sinh(), CubicPlusLinear(1.0, 1.0)],
                         ids=lambda g: g.name)
def test_fenchel_moreau_double_conjugate(graph, rng):
    # j**(r) = sup_s (r s - j*(s)), maximized on a coarse grid then refined
    for ri in rng.uniform(-2.0, 2.0, size=4):
        s_star = float(graph.beta0(np.asarray(2.0 * abs(ri) + 1.0)))
        lo, hi = -s_star - 5.0, s_star + 5.0
        for _ in range(5):
            s_grid = np.linspace(lo, hi, 201)
            jstar = np.asarray(graph.conjugate(s_grid))
            i = int(np.argmax(ri * s_grid - jstar))
            lo, hi = s_grid[max(0, i - 2)], s_grid[min(200, i + 2)]
        jdd = float(np.max(ri * s_grid - jstar))
        assert jdd == pytest.approx(float(potential(graph, float(ri))), abs=1e-6)


# --- symmetry certificate ----------------------------------------------------

def test_symmetry_certificate_even_graphs():
    for graph in (Cubic(), Sinh()):
        cert = symmetry_certificate(graph)
        assert isinstance(cert, SymmetryCertificate)
        assert cert.M1 == 1.0
        assert cert.eta == 1.0


def test_symmetry_certificate_failure_exp():
    res = symmetry_certificate(ExpAsymmetric())
    assert isinstance(res, SymmetryFailure)
    ratios = [q for _, q in res.ratios]
    assert ratios[-1] > 1e6
    assert ratios == sorted(ratios)  # diverging sequence


def test_symmetry_certificate_invariant(rng):
    graph = CubicPlusLinear(2.0, 0.5)
    cert = symmetry_certificate(graph, scan_radius=30.0)
    r = np.concatenate([rng.uniform(-cert.R, cert.R, 100),
                        np.geomspace(cert.R, 30.0, 60),
                        -np.geomspace(cert.R, 30.0, 60)])
    jp = graph.potential(r)
    jm = graph.potential(-r)
    assert np.all(jp <= cert.M1 * jm + cert.M2 + 1e-9)
    assert cert.eta == 1.0 / cert.M1


def test_eta_property(rng):
    for graph in (Cubic(), Sinh()):
        cert = symmetry_certificate(graph)
        y = rng.uniform(-4.0, 4.0, size=16)
        for yi in y:
            lhs = conjugate(graph, cert.eta * abs(float(yi)))
            assert lhs <= conjugate(graph, float(yi)) + cert.M2 + 1e-10


# --- mollified drift ---------------------------------------------------------

def test_mollified_fixes_affine():
    lin = PolynomialOdd((2.0,))          # beta_lam stays linear
    reg = RegularizedDrift(0.1, 6)
    lam_slope = 2.0 / (1.0 + 2.0 * 0.1)
    for r in (-1.3, 0.0, 0.9):
        assert mollified_drift(reg, lin, r) == pytest.approx(lam_slope * r, abs=1e-13)
        assert mollified_drift_deriv1(reg, lin, r) == pytest.approx(lam_slope, abs=1e-12)
        assert mollified_drift_deriv2(reg, lin, r) == pytest.approx(0.0, abs=1e-12)


def test_mollified_odd_at_zero():
    reg = RegularizedDrift(0.1, 100)
    assert mollified_drift(reg, Cubic(), 0.0) == pytest.approx(0.0, abs=1e-14)


def test_mollified_vs_riemann_oracle():
    g = Cubic()
    lam, n, r = 0.1, 4, 1.0
    reg = RegularizedDrift(lam, n)
    m = 1_000_000
    u = (np.arange(m) + 0.5) / m * (2.0 / n) - 1.0 / n
    blam = (r - u - g.resolvent(lam, r - u)) / lam
    oracle = float(np.sum(blam * n * graphs.bump(n * u))) * (2.0 / n / m)
    assert mollified_drift(reg, g, r) == pytest.approx(oracle, abs=1e-8)


def test_mollified_monotone_and_lipschitz(rng):
    reg = RegularizedDrift(0.1, 8)
    for graph in (Cubic(), Sinh()):
        r = np.sort(rng.uniform(-4.0, 4.0, size=300))
        v = mollified_drift(reg, graph, r)
        assert np.all(np.diff(v) >= -1e-12)
        lip = np.max(np.abs(np.diff(v)) / np.diff(r))
        assert lip <= 1.0 / reg.lam + 1e-6
        d1 = mollified_drift_deriv1(reg, graph, r)
        assert np.all(d1 >= -1e-12)


def test_regularized_drift_validation():
    with pytest.raises(ValueError):
        RegularizedDrift(-0.1, 4)
    with pytest.raises(ValueError):
        RegularizedDrift(0.1, 0)


# --- graph construction and validators --------------------------------------

def test_graph_from_config_roundtrip():
    assert graphs.graph_from_config("cubic").name == "cubic"
    assert graphs.graph_from_config("zero").beta0(np.asarray(2.0)) == 0.0
    pl = graphs.graph_from_config("piecewise", (1.0, 0.0, -1.0, 0.0, 1.0, 1.0))
    assert not pl.is_function
    with pytest.raises(ValueError):
        graphs.graph_from_config("nope")


def test_validate_graph_rows(rng):
    rows = graphs.validate_graph(Cubic(), rng)
    assert all(ok for _, ok, _ in rows)
    rows = graphs.validate_graph(
        PiecewiseLinear([(-1.0, -1.0), (1.0, 1.0)], 0.0, 3.0), rng)
    assert all(ok for _, ok, _ in rows)


def test_piecewise_requires_zero_in_beta0():
    with pytest.raises(ValueError):
        PiecewiseLinear([(0.0, 1.0), (1.0, 2.0)], 1.0, 1.0)


def test_zero_graph_is_identity_resolvent(rng):
    z = zero_graph()
    s = rng.uniform(-3.0, 3.0, size=20)
    assert np.allclose(z.resolvent(0.5, s), s, atol=1e-14)
    assert z.superlinearity() is None
