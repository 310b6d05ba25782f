"""Discrete Gelfand triple V c H c V' on D = (0,1).

The operator A is the Dirichlet finite-difference Laplacian on N interior
nodes (mesh h = 1/(N+1), optional diffusivity factor). Norms:

    ||u||_H^2  = h * sum u_i^2
    ||u||_V^2  = nu/h * sum (u_{i+1} - u_i)^2        (u_0 = u_{N+1} = 0)
    ||u||_V'^2 = <A^{-1} u, u>_H

so <Au, u>_H = ||u||_V^2 identically (coercivity constant 1) and the
embedding norm of V into H is K = lambda_min^{-1/2}.

Field states are plain 1-D float64 arrays of interior nodal values; every
operation also accepts batches with the node axis last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ThomasFactor:
    """Prefactored tridiagonal solve for a constant matrix diag(d) + off(o).

    The factorization is unpivoted; for the M-matrices used here (positive
    diagonal, nonpositive off-diagonals, diagonally dominant) every sweep is
    subtraction-free on nonnegative right-hand sides, so sign structure is
    preserved in floating point.
    """

    diag: np.ndarray
    off: float
    gamma: np.ndarray = field(init=False, repr=False)
    denom: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.diag)
        gamma = np.empty(n)
        denom = np.empty(n)
        denom[0] = self.diag[0]
        gamma[0] = self.off / denom[0]
        for i in range(1, n):
            denom[i] = self.diag[i] - self.off * gamma[i - 1]
            gamma[i] = self.off / denom[i]
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "denom", denom)

    def solve(self, f: np.ndarray) -> np.ndarray:
        """Solve along the last axis; f may be batched."""
        f = np.asarray(f, dtype=float)
        n = len(self.diag)
        if f.shape[-1] != n:
            raise ValueError(f"rhs has {f.shape[-1]} nodes, expected {n}")
        y = np.empty_like(f)
        y[..., 0] = f[..., 0] / self.denom[0]
        for i in range(1, n):
            y[..., i] = (f[..., i] - self.off * y[..., i - 1]) / self.denom[i]
        x = np.empty_like(f)
        x[..., n - 1] = y[..., n - 1]
        for i in range(n - 2, -1, -1):
            x[..., i] = y[..., i] - self.gamma[i] * x[..., i + 1]
        return x


class TripleSpace:
    """Immutable discretization of the triple on (0,1) with Dirichlet walls."""

    def __init__(self, n_interior: int, diffusivity: float = 1.0):
        if n_interior < 1:
            raise ValueError("n_interior must be >= 1")
        if not (diffusivity > 0.0):
            raise ValueError("diffusivity must be positive")
        self.n = int(n_interior)
        self.diffusivity = float(diffusivity)
        self.h = 1.0 / (self.n + 1)
        k = np.arange(1, self.n + 1)
        self.lambdas = (4.0 * self.diffusivity / self.h ** 2) * np.sin(
            0.5 * np.pi * k * self.h) ** 2
        self.grid = self.h * k
        # H-orthonormal discrete sine modes, columns e_1..e_N
        self.emodes = np.sqrt(2.0) * np.sin(np.pi * np.outer(self.grid, k))
        self.C_coercivity = 1.0
        self.K_embed = float(self.lambdas[0]) ** -0.5
        self.m_ultra = 1
        self._a_factor = ThomasFactor(
            diag=np.full(self.n, 2.0 * self.diffusivity / self.h ** 2),
            off=-self.diffusivity / self.h ** 2,
        )
        self._shift_cache: dict[float, ThomasFactor] = {}

    # --- operator ----------------------------------------------------------
    def apply_A(self, u) -> np.ndarray:
        """(Au)_i = nu (2 u_i - u_{i-1} - u_{i+1}) / h^2, zero boundary."""
        u = self._check(u)
        out = 2.0 * u.copy()
        out[..., :-1] -= u[..., 1:]
        out[..., 1:] -= u[..., :-1]
        out *= self.diffusivity / self.h ** 2
        return out

    def shifted_factor(self, delta: float) -> ThomasFactor:
        if not (delta >= 0.0):
            raise ValueError("shift must be nonnegative")
        fac = self._shift_cache.get(delta)
        if fac is None:
            c = delta * self.diffusivity / self.h ** 2
            fac = ThomasFactor(diag=np.full(self.n, 1.0 + 2.0 * c), off=-c)
            self._shift_cache[delta] = fac
        return fac

    def solve_shifted(self, delta: float, f) -> np.ndarray:
        """(I + delta A)^{-1} f by the unpivoted tridiagonal sweep."""
        if not (delta > 0.0):
            raise ValueError("delta must be positive")
        return self.shifted_factor(delta).solve(self._check(f))

    def shifted_inverse_dense(self, delta: float) -> np.ndarray:
        """Dense (I + delta A)^{-1}, for BLAS-friendly batched propagation."""
        return self.shifted_factor(delta).solve(np.eye(self.n)).T.copy()

    def solve_A(self, f) -> np.ndarray:
        """A^{-1} f (used by the dual norm)."""
        return self._a_factor.solve(self._check(f))

    # --- inner products and norms ------------------------------------------
    def inner_H(self, u, v) -> np.ndarray:
        return self.h * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm_H(self, u) -> np.ndarray:
        u = self._check(u)
        return np.sqrt(self.h * np.sum(u * u, axis=-1))

    def norm_V_sq(self, u) -> np.ndarray:
        """Dirichlet energy nu/h * sum of squared increments (independent of A)."""
        u = self._check(u)
        inner = np.sum((u[..., 1:] - u[..., :-1]) ** 2, axis=-1)
        walls = u[..., 0] ** 2 + u[..., -1] ** 2
        return (self.diffusivity / self.h) * (inner + walls)

    def norm_V(self, u) -> np.ndarray:
        return np.sqrt(self.norm_V_sq(u))

    def norm_Vdual(self, u) -> np.ndarray:
        u = self._check(u)
        w = self.solve_A(u)
        return np.sqrt(np.maximum(self.inner_H(w, u), 0.0))

    def norm_L1(self, u) -> np.ndarray:
        return self.h * np.sum(np.abs(u), axis=-1)

    def norm_Linf(self, u) -> np.ndarray:
        return np.max(np.abs(u), axis=-1)

    # --- spectral helpers ----------------------------------------------------
    def mode(self, k: int) -> np.ndarray:
        """H-orthonormal eigenvector e_k (1-based)."""
        if not 1 <= k <= self.n:
            raise ValueError(f"mode index {k} outside 1..{self.n}")
        return self.emodes[:, k - 1].copy()

    def mode_coords(self, u, ks) -> np.ndarray:
        """Coordinates <u, e_k>_H for the listed modes, batched over u."""
        cols = self.emodes[:, [k - 1 for k in ks]]
        return self.h * (np.asarray(u) @ cols)

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n:
            raise ValueError(f"field has {u.shape[-1]} nodes, expected {self.n}")
        return u

    def __repr__(self):
        return f"TripleSpace(n={self.n}, diffusivity={self.diffusivity:g})"


# ---------------------------------------------------------------------------
# Randomized validators for the operator assumptions
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    rows: list  # (name, passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if not r[1]]


def validate_assumptions(space: TripleSpace, trials: int = 100,
                         rng: np.random.Generator | None = None) -> ValidationReport:
    """Randomized checks of the operator hypotheses.

    (i)  coercivity identity <Au,u>_H = ||u||_V^2 on V-normalized inputs;
    (ii) L1 contraction of (I + delta A)^{-1} (accretivity consequence);
    (iii) sub-Markov property: [0,1]-valued inputs stay [0,1]-valued;
    (iv) ultracontractivity with m = 1: ||(I+dA)^{-1}f||_inf <= c ||f||_L1,
         empirical constant recorded.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng or np.random.default_rng(0)
    rows = []
    deltas = (1e-3, 1e-1, 1.0, 10.0)

    u = rng.standard_normal((trials, space.n))
    u /= space.norm_V(u)[:, None]
    gap = np.abs(space.inner_H(space.apply_A(u), u) - space.norm_V_sq(u))
    worst = float(np.max(gap))
    rows.append(("space.coercivity_identity", worst <= 1e-12,
                 f"max |<Au,u> - |u|_V^2| = {worst:.3e} at |u|_V = 1"))

    f01 = rng.uniform(0.0, 1.0, (trials, space.n))
    bad = 0
    for d in deltas:
        g = space.solve_shifted(d, f01)
        bad += int(np.count_nonzero((g < 0.0) | (g > 1.0)))
    rows.append(("space.sub_markov", bad == 0,
                 f"{bad} nodewise violations over {trials * len(deltas)} solves"))

    fs = rng.standard_normal((trials, space.n))
    l1_in = space.norm_L1(fs)
    contr_ok = True
    worst_ratio = 0.0
    for d in deltas:
        l1_out = space.norm_L1(space.solve_shifted(d, fs))
        ratio = float(np.max(l1_out / l1_in))
        worst_ratio = max(worst_ratio, ratio)
        contr_ok &= bool(np.all(l1_out <= l1_in * (1.0 + 1e-13)))
    rows.append(("space.l1_contraction", contr_ok,
                 f"max ||res f||_1 / ||f||_1 = {worst_ratio:.12f}"))

    c_emp = 0.0
    for d in deltas:
        out = space.norm_Linf(space.solve_shifted(d, np.abs(fs)))
        c_emp = max(c_emp, float(np.max(out / space.norm_L1(np.abs(fs)))))
    finite = np.isfinite(c_emp)
    rows.append(("space.ultracontractive_m1", bool(finite),
                 f"empirical ||(I+dA)^-1||_{{L1->Linf}} <= {c_emp:.4f}"))

    sym = space.inner_H(space.apply_A(u), np.roll(u, 1, axis=0)) - \
        space.inner_H(u, space.apply_A(np.roll(u, 1, axis=0)))
    worst_sym = float(np.max(np.abs(sym)))
    rows.append(("space.symmetry", worst_sym <= 1e-11,
                 f"max |<Au,v> - <u,Av>| = {worst_sym:.3e}"))

    return ValidationReport(rows=rows)
