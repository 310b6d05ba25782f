"""Scalar convex-analysis toolkit: maximal monotone graphs and their calculus.

A graph here is a nondecreasing (possibly set-valued) relation beta on the
real line with 0 in beta(0) and full domain, together with its convex
potential j (beta = dj, j(0) = 0) and the machinery built on top of it:
resolvents (I + lam*beta)^{-1}, Yosida approximants beta_lam, convex
conjugates j*, growth-symmetry certificates, and mollified regularizations
beta_{lam,n} = beta_lam * rho_n with a smooth bump kernel.

All evaluators are vectorized over numpy arrays; the module-level operations
accept scalars or arrays and return matching shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RESOLVENT_TOL = 1e-12
RESOLVENT_MAX_ITER = 200
CONJUGATE_WIDTH_TOL = 1e-10
CONJUGATE_DOMAIN_CAP = 1e6
_RANGE_CAP = 1e12


class ResolventError(RuntimeError):
    """Raised when the safeguarded root finder exhausts its iteration cap."""


def _as_array(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite {name}")
    return a


def _match(result: np.ndarray, template) -> float | np.ndarray:
    if np.isscalar(template) or getattr(template, "ndim", 1) == 0:
        return float(result)
    return result


class MonotoneGraph:
    """Base class: a maximal monotone graph with 0 in beta(0), D(beta) = R."""

    name = "abstract"
    is_function = True  # no vertical segments unless a subclass says so

    # --- selections -------------------------------------------------------
    def beta0(self, r: np.ndarray) -> np.ndarray:
        """Minimal section: the least-absolute-value element of beta(r)."""
        raise NotImplementedError

    def beta_lower(self, r: np.ndarray) -> np.ndarray:
        return self.beta0(r)

    def beta_upper(self, r: np.ndarray) -> np.ndarray:
        return self.beta0(r)

    def beta0_prime(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def beta0_second(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # --- potential and conjugate -----------------------------------------
    def potential(self, r: np.ndarray) -> np.ndarray:
        """j(r), the convex potential with j(0) = 0."""
        raise NotImplementedError

    def conjugate(self, s) -> float | np.ndarray:
        """j*(s) = sup_r (s r - j(r)); numeric fallback, overridden when closed."""
        a = _as_array(s, "conjugate argument")
        out = np.empty_like(a, dtype=float)
        flat = a.ravel()
        res = out.ravel()
        for i, si in enumerate(flat):
            res[i] = _numeric_conjugate(self, float(si))
        return _match(out, s)

    # --- resolvent --------------------------------------------------------
    def resolvent(self, lam: float, s: np.ndarray) -> np.ndarray:
        """Unique x with x + lam*y = s for some y in beta(x); vectorized."""
        return _newton_resolvent(self, lam, s)

    # --- misc -------------------------------------------------------------
    def superlinearity(self) -> tuple[float, float] | None:
        """(c, delta) with (y1-y2)(x1-x2) >= c|x1-x2|^(2+delta), if known."""
        return None

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"<{type(self).__name__}>"


# ---------------------------------------------------------------------------
# Safeguarded scalar root finding, vectorized elementwise.
# ---------------------------------------------------------------------------

def _newton_resolvent(graph: MonotoneGraph, lam: float, s,
                      tol: float = RESOLVENT_TOL,
                      max_iter: int = RESOLVENT_MAX_ITER) -> np.ndarray:
    """Solve x + lam*beta0(x) = s by Newton with a bisection safeguard.

    The bracket [min(0,s), max(0,s)] is valid because 0 in beta(0) and beta
    is nondecreasing, so F(x) = x + lam*beta0(x) - s changes sign on it.
    """
    if not (lam > 0.0) or not math.isfinite(lam):
        raise ValueError("resolvent parameter must be positive and finite")
    s_arr = _as_array(s, "resolvent input")
    scale = np.maximum(1.0, np.abs(s_arr))
    lo = np.minimum(0.0, s_arr)
    hi = np.maximum(0.0, s_arr)
    x = s_arr.astype(float, copy=True)
    conv = np.zeros(s_arr.shape, dtype=bool)
    for _ in range(max_iter):
        if conv.all():
            return x
        with np.errstate(over="ignore", invalid="ignore"):
            f = x + lam * graph.beta0(x) - s_arr
        hit = (np.abs(f) <= tol * scale) | ((hi - lo) <= tol * scale)
        pos = f >= 0.0
        hi = np.where(pos & ~conv, np.minimum(x, hi), hi)
        lo = np.where(~pos & ~conv, np.maximum(x, lo), lo)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            fp = 1.0 + lam * graph.beta0_prime(x)
            xn = x - f / fp
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        # elements that just hit tolerance still take this Newton update: one
        # polishing step past detection lands on the quadratic-convergence
        # floor, keeping coupled differences free of root-finder noise
        x = np.where(conv, x, xn)
        conv |= hit
    if conv.all():
        return x
    width = float(np.max((hi - lo)[~conv], initial=0.0))
    raise ResolventError(
        f"resolvent iteration cap {max_iter} exceeded for {graph.name}: "
        f"{int(np.count_nonzero(~conv))} unconverged, worst bracket width {width:.3e}"
    )


def _bisect_resolvent(graph: MonotoneGraph, lam: float, s,
                      tol: float = RESOLVENT_TOL,
                      max_iter: int = RESOLVENT_MAX_ITER) -> np.ndarray:
    """Resolvent for set-valued graphs: three-way bisection on the bracket.

    x* is the unique point with x + lam*beta_lower(x) <= s <= x + lam*beta_upper(x);
    vertical segments are hit exactly when s lands inside one.
    """
    if not (lam > 0.0) or not math.isfinite(lam):
        raise ValueError("resolvent parameter must be positive and finite")
    s_arr = _as_array(s, "resolvent input")
    scale = np.maximum(1.0, np.abs(s_arr))
    lo = np.minimum(0.0, s_arr)
    hi = np.maximum(0.0, s_arr)
    hit = 0.5 * (lo + hi)
    hit_set = np.zeros(s_arr.shape, dtype=bool)
    done = np.zeros(s_arr.shape, dtype=bool)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_up = mid + lam * graph.beta_upper(mid) - s_arr
        f_lo = mid + lam * graph.beta_lower(mid) - s_arr
        inside = (f_lo <= 0.0) & (f_up >= 0.0)
        hit = np.where(inside & ~hit_set, mid, hit)
        hit_set |= inside
        done = hit_set | ((hi - lo) <= tol * scale)
        if done.all():
            return np.where(hit_set, hit, 0.5 * (lo + hi))
        move_up = f_up < 0.0
        lo = np.where(move_up & ~done, mid, lo)
        hi = np.where(~move_up & ~done, mid, hi)
    raise ResolventError(
        f"resolvent bisection cap {max_iter} exceeded for {graph.name}"
    )


def _numeric_conjugate(graph: MonotoneGraph, s: float) -> float:
    """Golden-section maximization of the concave map r -> s*r - j(r)."""
    if abs(s) > CONJUGATE_DOMAIN_CAP:
        raise ValueError(f"conjugate argument |s| <= {CONJUGATE_DOMAIN_CAP:g} (got {s:g})")
    if s == 0.0:
        return 0.0
    sign = 1.0 if s > 0.0 else -1.0

    def _outer_selection(radius: float) -> float:
        if sign > 0:
            return float(graph.beta_lower(np.asarray(radius)))
        return float(graph.beta_upper(np.asarray(-radius)))

    # expand until a selection of beta passes s, i.e. the maximizer is bracketed
    hi = 1.0
    while sign * _outer_selection(hi) < abs(s):
        hi *= 2.0
        if hi > _RANGE_CAP:
            return math.inf  # sup diverges: s beyond the closure of range(beta)
    a, b = 0.0, hi
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)

    def phi(r: float) -> float:
        return s * (sign * r) - float(graph.potential(np.asarray(sign * r)))

    fc, fd = phi(c), phi(d)
    for _ in range(300):
        if b - a <= CONJUGATE_WIDTH_TOL:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = phi(d)
    r_best = 0.5 * (a + b)
    return max(phi(r_best), 0.0)  # j >= 0 and j(0) = 0 force j* >= 0


# ---------------------------------------------------------------------------
# Built-in graphs
# ---------------------------------------------------------------------------

class Cubic(MonotoneGraph):
    """beta(r) = r^3, j(r) = r^4/4, j*(s) = (3/4)|s|^{4/3}."""

    name = "cubic"

    def beta0(self, r):
        return r * r * r

    def beta0_prime(self, r):
        return 3.0 * r * r

    def beta0_second(self, r):
        return 6.0 * r

    def potential(self, r):
        r2 = r * r
        return 0.25 * r2 * r2  # bitwise even, so symmetry scans see ratio 1

    def conjugate(self, s):
        a = _as_array(s, "conjugate argument")
        return _match(0.75 * np.abs(a) ** (4.0 / 3.0), s)

    def superlinearity(self):
        # (a^3-b^3)(a-b) = (a-b)^2 (a^2+ab+b^2) >= (1/4)(a-b)^4
        return 0.25, 2.0


class CubicPlusLinear(MonotoneGraph):
    """beta(r) = a r^3 + b r with a > 0, b >= 0."""

    name = "cubic_linear"

    def __init__(self, a: float = 1.0, b: float = 1.0):
        if not (a > 0.0 and b >= 0.0):
            raise ValueError("cubic_linear needs a > 0, b >= 0")
        self.a, self.b = float(a), float(b)

    def beta0(self, r):
        return self.a * r * r * r + self.b * r

    def beta0_prime(self, r):
        return 3.0 * self.a * r * r + self.b

    def beta0_second(self, r):
        return 6.0 * self.a * r

    def potential(self, r):
        r2 = r * r
        return 0.25 * self.a * r2 * r2 + 0.5 * self.b * r2

    def superlinearity(self):
        return 0.25 * self.a, 2.0


class Sinh(MonotoneGraph):
    """beta(r) = sinh r, j(r) = cosh r - 1, j*(s) = s asinh s - sqrt(1+s^2) + 1."""

    name = "sinh"

    def beta0(self, r):
        return np.sinh(r)

    def beta0_prime(self, r):
        return np.cosh(r)

    def beta0_second(self, r):
        return np.sinh(r)

    def potential(self, r):
        return np.cosh(r) - 1.0

    def conjugate(self, s):
        a = _as_array(s, "conjugate argument")
        val = a * np.arcsinh(a) - np.sqrt(1.0 + a * a) + 1.0
        return _match(val, s)

    def superlinearity(self):
        # sinh a - sinh b >= (a - b) + (a^3 - b^3)/6 for a >= b, so the cubic
        # part alone gives c = (1/6)(1/4).
        return 1.0 / 24.0, 2.0


class PolynomialOdd(MonotoneGraph):
    """beta(r) = sum_j c_j r^{2j+1} with c_j >= 0 (c = () gives beta = 0)."""

    name = "poly_odd"

    def __init__(self, coeffs=()):
        c = tuple(float(v) for v in coeffs)
        if any(v < 0.0 for v in c):
            raise ValueError("poly_odd coefficients must be nonnegative")
        self.coeffs = c

    def beta0(self, r):
        ra = np.asarray(r, dtype=float)
        out = np.zeros_like(ra)
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                out = out + c * ra ** (2 * j + 1)
        return out

    def beta0_prime(self, r):
        ra = np.asarray(r, dtype=float)
        out = np.zeros_like(ra)
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                out = out + c * (2 * j + 1) * ra ** (2 * j)
        return out

    def beta0_second(self, r):
        ra = np.asarray(r, dtype=float)
        out = np.zeros_like(ra)
        for j, c in enumerate(self.coeffs):
            if c != 0.0 and j > 0:
                out = out + c * (2 * j + 1) * (2 * j) * ra ** (2 * j - 1)
        return out

    def potential(self, r):
        ra = np.asarray(r, dtype=float)
        out = np.zeros_like(ra)
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                out = out + (ra * ra) ** (j + 1) * (c / (2 * j + 2))
        return out

    def superlinearity(self):
        for j in range(len(self.coeffs) - 1, -1, -1):
            if j > 0 and self.coeffs[j] > 0.0:
                # (x^{2j+1}-y^{2j+1})(x-y) >= 4^{-j} (x-y)^{2j+2}
                return self.coeffs[j] * 4.0 ** (-j), 2.0 * j
        return None


def zero_graph() -> PolynomialOdd:
    """The trivial drift beta = 0."""
    return PolynomialOdd(())


class ExpAsymmetric(MonotoneGraph):
    """beta(r) = e^r - 1, j(r) = e^r - r - 1; violates the growth-symmetry
    condition (j(r)/j(-r) ~ e^r / r diverges), kept as a negative example."""

    name = "exp_asym"

    def beta0(self, r):
        return np.expm1(r)

    def beta0_prime(self, r):
        return np.exp(r)

    def beta0_second(self, r):
        return np.exp(r)

    def potential(self, r):
        return np.expm1(r) - r

    def conjugate(self, s):
        a = _as_array(s, "conjugate argument")
        if np.any(np.abs(a) > CONJUGATE_DOMAIN_CAP):
            raise ValueError("conjugate argument beyond domain cap")
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(
                a > -1.0,
                (1.0 + a) * np.log1p(np.maximum(a, -1.0 + 1e-300)) - a,
                np.inf,
            )
            val = np.where(a == -1.0, 1.0, val)
        return _match(val, s)


class PiecewiseLinear(MonotoneGraph):
    """Monotone polyline graph: vertices (x_i, y_i) with both coordinates
    nondecreasing (repeated x = vertical jump, repeated y = flat run), extended
    beyond the ends with slopes left_slope, right_slope >= 0.

    Supports minimal sections, resolvents (bisection), piecewise-exact
    potentials, and numeric conjugates. 0 in beta(0) is enforced.
    """

    name = "piecewise"
    is_function = True  # flipped in __init__ when a vertical segment exists

    def __init__(self, vertices, left_slope: float = 1.0, right_slope: float = 1.0):
        pts = [(float(x), float(y)) for x, y in vertices]
        if not pts:
            raise ValueError("piecewise graph needs at least one vertex")
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if np.any(np.diff(xs) < 0) or np.any(np.diff(ys) < 0):
            raise ValueError("piecewise vertices must be nondecreasing in x and y")
        if left_slope < 0 or right_slope < 0:
            raise ValueError("extension slopes must be nonnegative")
        self.xs, self.ys = xs, ys
        self.left_slope, self.right_slope = float(left_slope), float(right_slope)
        self.is_function = bool(np.all(np.diff(xs) > 0)) or len(xs) == 1
        lo0 = float(self.beta_lower(np.asarray(0.0)))
        up0 = float(self.beta_upper(np.asarray(0.0)))
        if not (lo0 <= 0.0 <= up0):
            raise ValueError("piecewise graph must satisfy 0 in beta(0)")

    def _interp(self, r, side: str) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        xs, ys = self.xs, self.ys
        idx = np.searchsorted(xs, r, side="left" if side == "lower" else "right")
        out = np.empty_like(r)
        left = r < xs[0]
        right = r > xs[-1]
        out[left] = ys[0] + self.left_slope * (r[left] - xs[0])
        out[right] = ys[-1] + self.right_slope * (r[right] - xs[-1])
        mid = ~(left | right)
        if np.any(mid):
            rm = r[mid]
            im = np.clip(idx[mid], 1, len(xs) - 1)
            x0, x1 = xs[im - 1], xs[im]
            y0, y1 = ys[im - 1], ys[im]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(x1 > x0, (rm - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0)
            val = y0 + t * (y1 - y0)
            # at a vertex/jump abscissa pick the requested one-sided value
            at_knot = np.isin(rm, xs)
            if np.any(at_knot):
                pos = np.searchsorted(xs, rm[at_knot], side="left")
                pos_r = np.searchsorted(xs, rm[at_knot], side="right") - 1
                val[at_knot] = ys[pos] if side == "lower" else ys[pos_r]
            out[mid] = val
        return out

    def beta_lower(self, r):
        return self._interp(r, "lower")

    def beta_upper(self, r):
        return self._interp(r, "upper")

    def beta0(self, r):
        lo = self.beta_lower(r)
        up = self.beta_upper(r)
        return np.where(lo > 0.0, lo, np.where(up < 0.0, up, 0.0))

    def beta0_prime(self, r):
        r = np.asarray(r, dtype=float)
        eps = 1e-9 * np.maximum(1.0, np.abs(r))
        return (self.beta_upper(r + eps) - self.beta_lower(r - eps)) / (2.0 * eps)

    def beta0_second(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def potential(self, r):
        """j(r) = int_0^r beta(u) du, exact segment-by-segment trapezoid."""
        r = np.asarray(r, dtype=float)
        # integration nodes: 0, interior vertices, r
        out = np.zeros_like(r)
        flat = r.ravel()
        acc = out.ravel()
        knots = self.xs
        for i, ri in enumerate(flat):
            a, b = (0.0, ri) if ri >= 0.0 else (ri, 0.0)
            inner = knots[(knots > a) & (knots < b)]
            nodes = np.concatenate(([a], inner, [b]))
            # trapezoid with one-sided values is exact on each linear piece
            seg = 0.5 * (self.beta_upper(nodes[:-1]) + self.beta_lower(nodes[1:]))
            seg = np.where(np.diff(nodes) > 0, seg * np.diff(nodes), 0.0)
            total = float(np.sum(seg))
            acc[i] = total if ri >= 0.0 else -total
        return out

    def resolvent(self, lam, s):
        return _bisect_resolvent(self, lam, s)


# ---------------------------------------------------------------------------
# Module-level operations (the public convex-analysis surface)
# ---------------------------------------------------------------------------

def resolvent(graph: MonotoneGraph, lam: float, s):
    """x = (I + lam*beta)^{-1}(s)."""
    arr = graph.resolvent(lam, _as_array(s, "resolvent input"))
    return _match(arr, s)


def yosida(graph: MonotoneGraph, lam: float, s):
    """beta_lam(s) = (s - (I + lam*beta)^{-1} s) / lam."""
    s_arr = _as_array(s, "yosida input")
    return _match((s_arr - graph.resolvent(lam, s_arr)) / lam, s)


def minimal_section(graph: MonotoneGraph, r):
    """beta^0(r): least-absolute-value element of beta(r)."""
    return _match(graph.beta0(_as_array(r, "minimal_section input")), r)


def potential(graph: MonotoneGraph, r):
    """j(r)."""
    return _match(graph.potential(_as_array(r, "potential input")), r)


def conjugate(graph: MonotoneGraph, s):
    """j*(s), closed form when the graph has one, else adaptive maximization."""
    return graph.conjugate(s)


# ---------------------------------------------------------------------------
# Growth-symmetry certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryCertificate:
    """Constants (M1, R, M2, eta) with j(r) <= M1 j(-r) + M2 on the scanned grid."""

    M1: float
    R: float
    M2: float
    eta: float
    scan_radius: float


@dataclass(frozen=True)
class SymmetryFailure:
    """Diverging ratio evidence: (radius, j(r)/j(-r)) samples."""

    ratios: tuple[tuple[float, float], ...]
    scan_radius: float


_RATIO_CAP = 1e6


def symmetry_certificate(graph: MonotoneGraph, scan_radius: float = 40.0):
    """Scan j(r)/j(-r) on a geometric grid up to scan_radius.

    Returns a SymmetryCertificate on success (eta = 1/M1), or a
    SymmetryFailure carrying the diverging ratio sequence. Any finite scan is
    a heuristic: the certificate records its radius and claims nothing beyond.
    """
    if not scan_radius > 0.0:
        raise ValueError("scan_radius must be positive")
    radii = np.geomspace(max(0.5, scan_radius / 128.0), scan_radius, 96)
    jp = graph.potential(radii)
    jm = graph.potential(-radii)
    with np.errstate(divide="ignore", invalid="ignore"):
        fw = np.where(jm > 0.0, jp / jm, np.where(jp > 0.0, np.inf, 1.0))
        bw = np.where(jp > 0.0, jm / jp, np.where(jm > 0.0, np.inf, 1.0))
    ratio = np.maximum(fw, bw)
    tail = ratio[3 * len(ratio) // 4:]
    if np.any(~np.isfinite(tail)) or np.max(tail) > _RATIO_CAP:
        idx = np.unique(np.clip([len(radii) // 3, 2 * len(radii) // 3, len(radii) - 1], 0, len(radii) - 1))
        samples = tuple((float(radii[i]), float(ratio[i])) for i in idx)
        return SymmetryFailure(ratios=samples, scan_radius=float(scan_radius))
    m1 = max(1.0, float(np.max(ratio)))
    r_thresh = float(radii[0])
    grid = np.linspace(-r_thresh, r_thresh, 257)
    m2 = float(np.max(graph.potential(grid)))
    return SymmetryCertificate(M1=m1, R=r_thresh, M2=m2, eta=1.0 / m1,
                               scan_radius=float(scan_radius))


# ---------------------------------------------------------------------------
# Mollified regularization beta_{lam,n} = beta_lam * rho_n
# ---------------------------------------------------------------------------

def _bump_unnormalized(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def _bump_norm_const() -> float:
    x, w = np.polynomial.legendre.leggauss(400)
    return 1.0 / float(np.sum(w * _bump_unnormalized(x)))


_BUMP_C = _bump_norm_const()


def bump(u) -> np.ndarray:
    """Standard C-infinity bump on (-1,1), unit mass."""
    return _BUMP_C * _bump_unnormalized(np.asarray(u, dtype=float))


def bump_prime(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    g = 1.0 - u * u
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    gi = g[inside]
    out[inside] = bump(u[inside]) * (-2.0 * u[inside] / (gi * gi))
    return out


def bump_second(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    g = 1.0 - u * u
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui, gi = u[inside], g[inside]
    out[inside] = bump(ui) * (
        4.0 * ui * ui / gi ** 4 - 2.0 / (gi * gi) - 8.0 * ui * ui / gi ** 3
    )
    return out


@dataclass(frozen=True)
class RegularizedDrift:
    """Yosida parameter, mollifier index, and the quadrature backing beta_{lam,n}."""

    lam: float
    n: int
    quadrature_points: int = 32
    _rule: tuple = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if not (self.lam > 0.0):
            raise ValueError("lambda must be positive")
        if not (self.n >= 1):
            raise ValueError("mollifier index must be >= 1")
        x, w = np.polynomial.legendre.leggauss(self.quadrature_points)
        # nodes u_q = x/n on [-1/n, 1/n]; rho_n(u) = n rho(n u) folds the n's away
        x = 0.5 * (x - x[::-1])          # bitwise symmetric grid
        w = 0.5 * (w + w[::-1])
        u = x / self.n
        # moment-corrected kernels: the discrete rho has exact mass 1 and the
        # derivative kernels integrate affine/quadratic test drifts exactly,
        # which is what makes mollification fix affine functions identically
        w0 = w * bump(x)
        w0 = 0.5 * (w0 + w0[::-1])
        w0 = w0 / np.sum(w0)
        w1 = w * bump_prime(x)
        w1 = 0.5 * (w1 - w1[::-1])
        w1 = w1 * (-1.0 / np.sum(w1 * u))
        w2 = w * bump_second(x)
        w2 = 0.5 * (w2 + w2[::-1])
        w2 = w2 - np.sum(w2) * w0
        w2 = w2 * (2.0 / np.sum(w2 * u * u))
        object.__setattr__(self, "_rule", (u, w0, w1, w2))

    def weights(self, order: int) -> tuple[np.ndarray, np.ndarray]:
        nodes, w0, w1, w2 = self._rule
        return nodes, (w0, w1, w2)[order]


def _mollify(reg: RegularizedDrift, graph: MonotoneGraph, r, order: int):
    r_arr = _as_array(r, "mollified drift input")
    nodes, w = reg.weights(order)
    shifted = r_arr[..., None] - nodes
    blam = (shifted - graph.resolvent(reg.lam, shifted)) / reg.lam
    return _match(blam @ w, r)


def mollified_drift(reg: RegularizedDrift, graph: MonotoneGraph, r):
    """beta_{lam,n}(r) = int beta_lam(r - u) rho_n(u) du by Gauss-Legendre."""
    return _mollify(reg, graph, r, 0)


def mollified_drift_deriv1(reg: RegularizedDrift, graph: MonotoneGraph, r):
    """d/dr beta_{lam,n}(r), differentiated under the integral (rho_n' kernel)."""
    return _mollify(reg, graph, r, 1)


def mollified_drift_deriv2(reg: RegularizedDrift, graph: MonotoneGraph, r):
    """d^2/dr^2 beta_{lam,n}(r) (rho_n'' kernel)."""
    return _mollify(reg, graph, r, 2)


# ---------------------------------------------------------------------------
# Config factory and assumption validators
# ---------------------------------------------------------------------------

def graph_from_config(kind: str, coeffs=()) -> MonotoneGraph:
    kind = kind.strip().lower()
    coeffs = tuple(float(c) for c in coeffs)
    if kind == "cubic":
        return Cubic()
    if kind in ("cubic_linear", "cubicpluslinear"):
        a, b = (coeffs + (1.0, 1.0))[:2] if coeffs else (1.0, 1.0)
        return CubicPlusLinear(a, b)
    if kind == "sinh":
        return Sinh()
    if kind in ("poly_odd", "polynomialodd"):
        return PolynomialOdd(coeffs)
    if kind == "zero":
        return zero_graph()
    if kind in ("exp_asym", "expasymmetric"):
        return ExpAsymmetric()
    if kind == "piecewise":
        # coeffs = [left_slope, x0, y0, x1, y1, ..., right_slope]
        if len(coeffs) < 4 or len(coeffs) % 2 != 0:
            raise ValueError("piecewise coeffs: left_slope, x0,y0,...,right_slope")
        left, right = coeffs[0], coeffs[-1]
        pts = coeffs[1:-1]
        vertices = list(zip(pts[0::2], pts[1::2]))
        return PiecewiseLinear(vertices, left, right)
    raise ValueError(f"unknown drift kind {kind!r}")


def validate_graph(graph: MonotoneGraph, rng: np.random.Generator,
                   samples: int = 256) -> list[tuple[str, bool, str]]:
    """Executable checks for the drift assumptions: 0 in beta(0), j(0) = 0,
    monotone minimal section, midpoint-convex potential."""
    rows = []
    lo0 = float(graph.beta_lower(np.asarray(0.0)))
    up0 = float(graph.beta_upper(np.asarray(0.0)))
    rows.append(("drift.zero_in_beta0", lo0 <= 0.0 <= up0,
                 f"beta(0) spans [{lo0:g},{up0:g}]"))
    j0 = float(graph.potential(np.asarray(0.0)))
    rows.append(("drift.potential_zero", abs(j0) <= 1e-14, f"j(0) = {j0:g}"))
    r = np.sort(rng.uniform(-8.0, 8.0, size=samples))
    b = graph.beta0(r)
    mono = bool(np.all(np.diff(b) >= -1e-12))
    rows.append(("drift.monotone", mono, "beta0 nondecreasing on sampled grid"))
    x = rng.uniform(-6.0, 6.0, size=samples)
    y = rng.uniform(-6.0, 6.0, size=samples)
    jm = graph.potential(0.5 * (x + y))
    bound = 0.5 * (graph.potential(x) + graph.potential(y))
    convex = bool(np.all(jm <= bound + 1e-9 * (1.0 + np.abs(bound))))
    rows.append(("drift.convex_potential", convex, "midpoint convexity sampled"))
    return rows
