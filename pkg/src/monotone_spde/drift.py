"""Per-step drift resolvent maps for the splitting integrator.

The drift half-step is the scalar map S = (I + dt*f)^{-1} applied nodewise,
where f is the drift in one of three forms:

    GraphExact       f = beta (possibly set-valued; S is the graph resolvent)
    Yosida(lam)      f = beta_lam, with the exact identity
                     (I + dt*beta_lam)^{-1} y = (lam*y + dt*J_{lam+dt}(y))/(lam+dt)
    Mollified(lam,n) f = beta_{lam,n} (bump-mollified Yosida approximant)

Each substep also exposes the exact first and second derivatives S', S'' of
the map it actually applies, which is what the tangent flows differentiate.
The mollified map is compiled once per (graph, lam, n, dt) into a cubic
Hermite table built from tight Newton solves, with a measured error gate and
an exact fallback outside the table range; its derivatives are the table's
own, so state and tangent flows stay consistent to the table error (~1e-11).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import graphs
from .graphs import MonotoneGraph, RegularizedDrift

_SUBSTEP_TOL = 1e-15  # selection exactness needs tighter-than-contract roots


@dataclass(frozen=True)
class GraphExact:
    pass


@dataclass(frozen=True)
class Yosida:
    lam: float


@dataclass(frozen=True)
class Mollified:
    lam: float
    n: int
    quadrature_points: int = 32

    def regularized(self) -> RegularizedDrift:
        return RegularizedDrift(self.lam, self.n, self.quadrature_points)


DriftForm = GraphExact | Yosida | Mollified


class DriftSubstep:
    """Scalar map x* = S(y) solving x* + dt f(x*) = y, with derivatives."""

    dt: float
    smooth = True

    def apply(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, y: np.ndarray, xstar: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def second_derivative(self, y: np.ndarray, xstar: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def xi(self, y: np.ndarray, xstar: np.ndarray) -> np.ndarray:
        """The discrete selection (y - x*)/dt in f(x*)."""
        return (y - xstar) / self.dt

    def drift_value(self, x: np.ndarray) -> np.ndarray:
        """f(x) itself (for implicit stepping and operator assembly)."""
        raise NotImplementedError

    def drift_prime(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _GraphSubstep(DriftSubstep):
    def __init__(self, graph: MonotoneGraph, dt: float):
        self.graph = graph
        self.dt = dt
        self.smooth = graph.is_function

    def apply(self, y):
        if isinstance(self.graph, graphs.PiecewiseLinear):
            return self.graph.resolvent(self.dt, y)
        return graphs._newton_resolvent(self.graph, self.dt, y, tol=_SUBSTEP_TOL)

    def derivative(self, y, xstar):
        return 1.0 / (1.0 + self.dt * self.graph.beta0_prime(xstar))

    def second_derivative(self, y, xstar):
        d = self.derivative(y, xstar)
        return -self.dt * self.graph.beta0_second(xstar) * d ** 3

    def drift_value(self, x):
        return self.graph.beta0(x)

    def drift_prime(self, x):
        return self.graph.beta0_prime(x)


class _YosidaSubstep(DriftSubstep):
    def __init__(self, graph: MonotoneGraph, lam: float, dt: float):
        if not (lam > 0.0):
            raise ValueError("Yosida parameter must be positive")
        self.graph = graph
        self.lam = lam
        self.dt = dt
        self.mu = lam + dt

    def _inner_resolvent(self, y):
        if isinstance(self.graph, graphs.PiecewiseLinear):
            return self.graph.resolvent(self.mu, y)
        return graphs._newton_resolvent(self.graph, self.mu, y, tol=_SUBSTEP_TOL)

    def apply(self, y):
        j = self._inner_resolvent(y)
        return (self.lam * y + self.dt * j) / self.mu

    def _recover_inner(self, y, xstar):
        # x* = (lam y + dt J)/mu  =>  J = (mu x* - lam y)/dt
        return (self.mu * xstar - self.lam * y) / self.dt

    def derivative(self, y, xstar):
        j = self._recover_inner(y, xstar)
        jp = 1.0 / (1.0 + self.mu * self.graph.beta0_prime(j))
        return (self.lam + self.dt * jp) / self.mu

    def second_derivative(self, y, xstar):
        j = self._recover_inner(y, xstar)
        jp = 1.0 / (1.0 + self.mu * self.graph.beta0_prime(j))
        jpp = -self.mu * self.graph.beta0_second(j) * jp ** 3
        return self.dt * jpp / self.mu

    def drift_value(self, x):
        return (x - self.graph.resolvent(self.lam, np.asarray(x, dtype=float))) / self.lam

    def drift_prime(self, x):
        j = self.graph.resolvent(self.lam, np.asarray(x, dtype=float))
        jp = 1.0 / (1.0 + self.lam * self.graph.beta0_prime(j))
        return (1.0 - jp) / self.lam


class _MollifiedSubstep(DriftSubstep):
    """Hermite-compiled resolvent of the mollified drift."""

    ERROR_GATE = 2e-11
    RANGE = 12.0

    def __init__(self, graph: MonotoneGraph, form: Mollified, dt: float):
        self.graph = graph
        self.form = form
        self.reg = form.regularized()
        self.dt = dt
        self._yosida = _YosidaSubstep(graph, form.lam, dt)
        npts = 4097
        for _ in range(3):
            err = self._build(npts)
            if err <= self.ERROR_GATE:
                break
            npts = 2 * npts - 1
        else:
            raise RuntimeError(
                f"mollified substep table failed its error gate: {err:.3e}")
        self.table_error = err

    # -- exact map ---------------------------------------------------------
    def _f(self, x):
        return graphs.mollified_drift(self.reg, self.graph, x)

    def _fp(self, x):
        return graphs.mollified_drift_deriv1(self.reg, self.graph, x)

    def _exact(self, y: np.ndarray) -> np.ndarray:
        """Tight safeguarded Newton for x + dt f(x) = y, Yosida warm start."""
        y = np.asarray(y, dtype=float)
        scale = np.maximum(1.0, np.abs(y))
        lo = np.minimum(0.0, y) - 2.0 / self.form.n
        hi = np.maximum(0.0, y) + 2.0 / self.form.n
        x = self._yosida.apply(y)
        conv = np.zeros(y.shape, dtype=bool)
        for _ in range(graphs.RESOLVENT_MAX_ITER):
            if conv.all():
                return x
            f = x + self.dt * self._f(x) - y
            hit = (np.abs(f) <= _SUBSTEP_TOL * scale) | ((hi - lo) <= _SUBSTEP_TOL * scale)
            pos = f >= 0.0
            hi = np.where(pos & ~conv, np.minimum(x, hi), hi)
            lo = np.where(~pos & ~conv, np.maximum(x, lo), lo)
            xn = x - f / (1.0 + self.dt * self._fp(x))
            bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            x = np.where(conv, x, xn)  # polish step for newly hit elements
            conv |= hit
        if conv.all():
            return x
        raise graphs.ResolventError("mollified substep root finding stalled")

    # -- table -------------------------------------------------------------
    def _build(self, npts: int) -> float:
        self.y_lo, self.y_hi = -self.RANGE, self.RANGE
        self.du = (self.y_hi - self.y_lo) / (npts - 1)
        ygrid = np.linspace(self.y_lo, self.y_hi, npts)
        xgrid = self._exact(ygrid)
        slope = 1.0 / (1.0 + self.dt * self._fp(xgrid))
        self.xs_tab, self.ms_tab = xgrid, slope
        stride = max(1, (npts - 1) // 512)
        ymid = ygrid[:-1:stride] + 0.5 * self.du
        err = float(np.max(np.abs(self._hermite(ymid, 0) - self._exact(ymid))))
        return err

    def _hermite(self, y: np.ndarray, order: int) -> np.ndarray:
        idx = np.clip(((y - self.y_lo) / self.du).astype(np.int64),
                      0, len(self.xs_tab) - 2)
        t = (y - (self.y_lo + idx * self.du)) / self.du
        x0, x1 = self.xs_tab[idx], self.xs_tab[idx + 1]
        m0, m1 = self.ms_tab[idx] * self.du, self.ms_tab[idx + 1] * self.du
        if order == 0:
            t2, t3 = t * t, t * t * t
            return ((2 * t3 - 3 * t2 + 1) * x0 + (t3 - 2 * t2 + t) * m0
                    + (-2 * t3 + 3 * t2) * x1 + (t3 - t2) * m1)
        if order == 1:
            t2 = t * t
            return ((6 * t2 - 6 * t) * x0 + (3 * t2 - 4 * t + 1) * m0
                    + (-6 * t2 + 6 * t) * x1 + (3 * t2 - 2 * t) * m1) / self.du
        t6 = 6 * t
        return ((2 * t6 - 6) * x0 + (t6 - 4) * m0
                + (6 - 2 * t6) * x1 + (t6 - 2) * m1) / self.du ** 2

    def _split_outside(self, y: np.ndarray) -> np.ndarray:
        return (y < self.y_lo) | (y > self.y_hi)

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        out = self._hermite(y, 0)
        outside = self._split_outside(y)
        if np.any(outside):
            out = np.where(outside, 0.0, out)
            out[outside] = self._exact(y[outside])
        return out

    def derivative(self, y, xstar):
        y = np.asarray(y, dtype=float)
        out = self._hermite(y, 1)
        outside = self._split_outside(y)
        if np.any(outside):
            out[outside] = 1.0 / (1.0 + self.dt * self._fp(xstar[outside]))
        return out

    def second_derivative(self, y, xstar):
        y = np.asarray(y, dtype=float)
        out = self._hermite(y, 2)
        outside = self._split_outside(y)
        if np.any(outside):
            xo = xstar[outside]
            d = 1.0 / (1.0 + self.dt * self._fp(xo))
            fpp = graphs.mollified_drift_deriv2(self.reg, self.graph, xo)
            out[outside] = -self.dt * fpp * d ** 3
        return out

    def drift_value(self, x):
        return self._f(np.asarray(x, dtype=float))

    def drift_prime(self, x):
        return self._fp(np.asarray(x, dtype=float))


_CACHE: dict[tuple, DriftSubstep] = {}


def _graph_key(graph: MonotoneGraph) -> tuple:
    if isinstance(graph, graphs.CubicPlusLinear):
        return (graph.name, graph.a, graph.b)
    if isinstance(graph, graphs.PolynomialOdd):
        return (graph.name, graph.coeffs)
    if isinstance(graph, graphs.PiecewiseLinear):
        return (graph.name, tuple(graph.xs), tuple(graph.ys),
                graph.left_slope, graph.right_slope)
    return (graph.name,)


def make_substep(graph: MonotoneGraph, form: DriftForm, dt: float) -> DriftSubstep:
    """Build (or fetch) the drift half-step map for this graph/form/dt."""
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError("dt must be positive and finite")
    key = (_graph_key(graph), form, dt)
    sub = _CACHE.get(key)
    if sub is not None:
        return sub
    if isinstance(form, GraphExact):
        sub = _GraphSubstep(graph, dt)
    elif isinstance(form, Yosida):
        sub = _YosidaSubstep(graph, form.lam, dt)
    elif isinstance(form, Mollified):
        sub = _MollifiedSubstep(graph, form, dt)
    else:
        raise TypeError(f"unknown drift form {form!r}")
    _CACHE[key] = sub
    return sub
