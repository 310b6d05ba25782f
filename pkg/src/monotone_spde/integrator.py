"""Structure-preserving time stepping for dX + AX dt + beta(X) dt in B dW.

The default scheme is a Lie splitting whose sub-steps are both exact
resolvents, applied in the order noise / drift / diffusion:

    Yhat    = X_m + B(X_m) dW_m
    X*_i    = (I + dt beta)^{-1} Yhat_i   nodewise, xi_{m+1} = (Yhat - X*)/dt
    X_{m+1} = (I + dt A)^{-1} X*

so the selection xi_{m+1} lies in beta(X*) by the resolvent definition, both
sub-maps are nonexpansive in H (and order preserving in L1), and 0 is an
equilibrium. A fully implicit one-solve variant is kept for cross-validation.

Time integrals accumulate with left-endpoint quadrature in X; the integrals
involving the selection are sampled at the sub-step where the selection is
defined (the only point where the inclusion is exact), and j*(xi) uses the
Young equality j(x) + j*(s) = x s for s in beta(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .drift import DriftForm, GraphExact, make_substep
from .graphs import MonotoneGraph
from .noise import BoundNoise, NoiseModel
from .parallel import map_blocks, path_blocks
from .space import TripleSpace


class NumericError(RuntimeError):
    """Divergence or non-finite state during time stepping."""


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    horizon: float
    mode: str = "lie"                    # "lie" or "implicit"
    drift_form: DriftForm = GraphExact()
    newton_tol: float = 1e-10
    save_stride: int = 0                 # 0: keep only accumulators
    save_stars: bool = False             # per-step starred states (tangent input)

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.dt > self.horizon * (1.0 + 1e-12):
            raise ValueError("dt must not exceed the horizon")
        if self.mode not in ("lie", "implicit"):
            raise ValueError(f"unknown scheme mode {self.mode!r}")
        if not (self.newton_tol > 0.0):
            raise ValueError("newton_tol must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))


@dataclass
class Quadratics:
    """Running time integrals along one path."""

    int_axx: float = 0.0      # int <A X, X> dt        (left endpoint)
    int_v2: float = 0.0       # int ||X||_V^2 dt       (independent V-form)
    int_j: float = 0.0        # int int_D j(X)         (left endpoint)
    int_jstar: float = 0.0    # int int_D j*(xi)       (at the selection)
    int_xi_xstar: float = 0.0  # int <xi, X*>_H
    int_hs: float = 0.0       # int ||B(X)||_HS^2 dt   (left endpoint)


@dataclass
class PathOutput:
    times: np.ndarray                    # save times (series rows)
    series: np.ndarray                   # columns t, normH2, normV2, j_int, jstar_int
    quad: Quadratics
    final_state: np.ndarray
    final_xi: np.ndarray
    states: np.ndarray | None = None     # saved states at stride
    xis: np.ndarray | None = None
    stars: np.ndarray | None = None      # per-step starred states
    yhats: np.ndarray | None = None      # per-step pre-drift states
    config: SchemeConfig | None = None


class StepEngine:
    """Bound scheme: substep map, dense diffusion resolvent, noise table."""

    def __init__(self, space: TripleSpace, graph: MonotoneGraph,
                 noise: NoiseModel | BoundNoise, cfg: SchemeConfig):
        self.space = space
        self.graph = graph
        self.cfg = cfg
        self.noise = noise if isinstance(noise, BoundNoise) else noise.bind(space)
        self.sub = make_substep(graph, cfg.drift_form, cfg.dt)
        if cfg.mode == "implicit" and not self.sub.smooth:
            raise ValueError("implicit mode needs a single-valued drift")
        self.W = space.shifted_inverse_dense(cfg.dt)
        self.noisy = self.noise.hs_norm_sq > 0.0
        self._c_off = cfg.dt * space.diffusivity / space.h ** 2

    def increment(self, X: np.ndarray, z: np.ndarray | None) -> np.ndarray:
        if not self.noisy or z is None:
            return np.zeros_like(X)
        eta = self.noise.transform(z, self.cfg.dt)
        if not self.noise.additive:
            eta = eta * self.noise.sigma(X)[..., None]
        return eta

    def step(self, X: np.ndarray, z: np.ndarray | None):
        """One step on a (B, N) batch; returns (X_next, X_star, xi)."""
        return self.step_full(X, z)[:3]

    def step_full(self, X: np.ndarray, z: np.ndarray | None):
        """As step, additionally returning the pre-drift state Yhat."""
        yhat = X + self.increment(X, z)
        if self.cfg.mode == "lie":
            xstar = self.sub.apply(yhat)
            xi = self.sub.xi(yhat, xstar)
            return xstar @ self.W, xstar, xi, yhat
        return self._implicit(yhat) + (yhat,)

    def _implicit(self, yhat: np.ndarray):
        dt = self.cfg.dt
        u = yhat @ self.W  # linear predictor as warm start
        history = []
        for _ in range(60):
            F = u + dt * self.space.apply_A(u) + dt * self.sub.drift_value(u) - yhat
            res = float(np.max(self.space.norm_H(F)))
            history.append(res)
            if res <= self.cfg.newton_tol:
                xi = self.sub.drift_value(u)
                return u, u, xi
            diag = 1.0 + 2.0 * self._c_off + dt * self.sub.drift_prime(u)
            u = u - _thomas_vardiag(diag, -self._c_off, F)
        raise NumericError(f"implicit Newton stalled, residual history {history[-6:]}")


def _thomas_vardiag(diag: np.ndarray, off: float, rhs: np.ndarray) -> np.ndarray:
    """Tridiagonal solve with per-row varying diagonal, batched on axis 0."""
    n = diag.shape[-1]
    denom = np.empty_like(diag)
    gam = np.empty_like(diag)
    denom[..., 0] = diag[..., 0]
    gam[..., 0] = off / denom[..., 0]
    for i in range(1, n):
        denom[..., i] = diag[..., i] - off * gam[..., i - 1]
        gam[..., i] = off / denom[..., i]
    y = np.empty_like(rhs)
    y[..., 0] = rhs[..., 0] / denom[..., 0]
    for i in range(1, n):
        y[..., i] = (rhs[..., i] - off * y[..., i - 1]) / denom[..., i]
    x = np.empty_like(rhs)
    x[..., n - 1] = y[..., n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i] = y[..., i] - gam[..., i] * x[..., i + 1]
    return x


# ---------------------------------------------------------------------------
# Single-path API
# ---------------------------------------------------------------------------

def step(space: TripleSpace, graph: MonotoneGraph, noise: NoiseModel | BoundNoise,
         cfg: SchemeConfig, x, rng: np.random.Generator):
    """One public step on a single state vector."""
    eng = StepEngine(space, graph, noise, cfg)
    X = np.asarray(x, dtype=float)[None, :]
    z = rng.standard_normal((1, eng.noise.modes)) if eng.noisy else None
    xn, _, xi = eng.step(X, z)
    if not np.all(np.isfinite(xn)):
        raise NumericError("non-finite state after one step")
    return xn[0], xi[0]


def simulate(space: TripleSpace, graph: MonotoneGraph, noise: NoiseModel | BoundNoise,
             cfg: SchemeConfig, x0, rng: np.random.Generator) -> PathOutput:
    """Iterate the scheme along one path, accumulating the running integrals."""
    eng = StepEngine(space, graph, noise, cfg)
    X = np.asarray(x0, dtype=float)[None, :].copy()
    dt, h = cfg.dt, space.h
    q = Quadratics()
    rows = [(0.0, float(space.norm_H(X[0])) ** 2, float(space.norm_V_sq(X[0])), 0.0, 0.0)]
    states, xis, stars, yhats = [], [], [], []
    xi_last = np.zeros(space.n)
    for m in range(cfg.n_steps):
        x_now = X[0]
        q.int_axx += dt * float(space.inner_H(space.apply_A(x_now), x_now))
        q.int_v2 += dt * float(space.norm_V_sq(x_now))
        q.int_j += dt * h * float(np.sum(graph.potential(x_now)))
        q.int_hs += dt * float(eng.noise.hs_norm_sq_at(x_now))
        z = rng.standard_normal((1, eng.noise.modes)) if eng.noisy else None
        X, star, xi, yhat = eng.step_full(X, z)
        jstar_nodes = xi[0] * star[0] - graph.potential(star[0])
        q.int_jstar += dt * h * float(np.sum(jstar_nodes))
        q.int_xi_xstar += dt * float(space.inner_H(xi[0], star[0]))
        xi_last = xi[0]
        if cfg.save_stars:
            stars.append(star[0].copy())
            yhats.append(yhat[0].copy())
        saved = cfg.save_stride > 0 and (m + 1) % cfg.save_stride == 0
        if saved:
            states.append(X[0].copy())
            xis.append(xi[0].copy())
        if saved or m == cfg.n_steps - 1:
            rows.append(((m + 1) * dt, float(space.norm_H(X[0])) ** 2,
                         float(space.norm_V_sq(X[0])), q.int_j, q.int_jstar))
        if not np.all(np.isfinite(X)):
            raise NumericError(f"non-finite state at step {m + 1}")
    series = np.array(rows)
    return PathOutput(
        times=series[:, 0], series=series, quad=q,
        final_state=X[0].copy(), final_xi=xi_last.copy(),
        states=np.array(states) if states else None,
        xis=np.array(xis) if xis else None,
        stars=np.array(stars) if stars else None,
        yhats=np.array(yhats) if yhats else None,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Chunked per-path noise tape (bitwise independent of batching)
# ---------------------------------------------------------------------------

class NoiseTape:
    """Per-step normal draws for a block of paths.

    Each path consumes its own Philox stream in step order; chunking is an
    implementation detail that leaves the per-path sequences unchanged.
    """

    CHUNK = 64

    def __init__(self, master_seed: int, domain: int, start: int, count: int,
                 modes: int):
        self._gens = streams.block_streams(master_seed, domain, start, count)
        self.modes = modes
        self._buf = None
        self._base = 0

    def draws(self, m: int) -> np.ndarray:
        if self._buf is None or not (self._base <= m < self._base + self._buf.shape[1]):
            self._base = (m // self.CHUNK) * self.CHUNK
            n = self.CHUNK
            self._buf = np.stack(
                [g.standard_normal((n, self.modes)) for g in self._gens])
        return self._buf[:, m - self._base, :]


# ---------------------------------------------------------------------------
# Ito-identity verifiers
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    residual: float
    se: float
    dt: float
    n_paths: int
    c_budget: float
    predicted_bias: float = math.nan
    extras: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return 3.0 * self.se + self.c_budget * self.dt

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.bound


def _ito_square_block(space, graph, eng, cfg, x0, master_seed, block):
    start, count = block
    tape = NoiseTape(master_seed, streams.DOMAIN_PATHS, start, count, eng.noise.modes)
    X = np.tile(np.asarray(x0, dtype=float), (count, 1))
    dt, h = cfg.dt, space.h
    int_axx = np.zeros(count)
    int_xi = np.zeros(count)
    int_hs = np.zeros(count)
    sum_ax2 = np.zeros(count)
    sum_xi2 = np.zeros(count)
    est1_lhs = np.zeros(count)  # C int ||X||_V^2 + int int j(X) + int int j*(xi)
    for m in range(cfg.n_steps):
        int_axx += dt * space.inner_H(space.apply_A(X), X)
        int_hs += dt * eng.noise.hs_norm_sq_at(X)
        est1_lhs += dt * (space.norm_V_sq(X) + h * np.sum(graph.potential(X), axis=-1))
        z = tape.draws(m) if eng.noisy else None
        X, star, xi = eng.step(X, z)
        int_xi += dt * space.inner_H(xi, star)
        est1_lhs += dt * h * np.sum(xi * star - graph.potential(star), axis=-1)
        ax = space.apply_A(X)
        sum_ax2 += h * np.sum(ax * ax, axis=-1)
        sum_xi2 += h * np.sum(xi * xi, axis=-1)
    x0n = float(space.norm_H(np.asarray(x0, dtype=float))) ** 2
    resid = 0.5 * space.norm_H(X) ** 2 + int_axx + int_xi - 0.5 * x0n - 0.5 * int_hs
    return resid, space.norm_V_sq(X), sum_ax2 + sum_xi2, est1_lhs


def verify_ito_square(space: TripleSpace, graph: MonotoneGraph, noise, cfg: SchemeConfig,
                      x0, n_paths: int, master_seed: int, threads: int = 1) -> IdentityReport:
    """Expectation residual of the energy identity for 1/2||X||^2.

    The martingale term drops under the expectation; the deterministic
    discretization bias of the splitting is, exactly,
        dt (||x0||_V^2 - E||X_M||_V^2) - (dt^2/2) sum_m E[||A X||^2 + ||xi||^2],
    which the report both predicts from run statistics (predicted_bias) and
    converts into the budget c (25% headroom).
    """
    if n_paths < 100:
        raise ValueError("need at least 100 paths")
    eng = StepEngine(space, graph, noise, cfg)
    out = map_blocks(
        lambda b: _ito_square_block(space, graph, eng, cfg, x0, master_seed, b),
        path_blocks(n_paths, 1024), threads)
    resid = np.concatenate([o[0] for o in out])
    v2_final = np.concatenate([o[1] for o in out])
    quad_sums = np.concatenate([o[2] for o in out])
    est1 = np.concatenate([o[3] for o in out])
    mean = float(np.mean(resid))
    se = float(np.std(resid, ddof=1) / np.sqrt(n_paths))
    x0v = float(space.norm_V_sq(np.asarray(x0, dtype=float)))
    bias = cfg.dt * (x0v - float(np.mean(v2_final))) \
        - 0.5 * cfg.dt ** 2 * float(np.mean(quad_sums))
    c = 1.25 * abs(bias) / cfg.dt
    extras = {
        "mean_final_v2": float(np.mean(v2_final)),
        "est1_lhs": float(np.mean(est1)),
        "est1_lhs_se": float(np.std(est1, ddof=1) / np.sqrt(n_paths)),
    }
    if eng.noise.additive:
        _, c0 = eng.noise.coercivity_constants()
        extras["est1_rhs"] = 0.5 * float(space.norm_H(np.asarray(x0, dtype=float))) ** 2 \
            + c0 * cfg.n_steps * cfg.dt
    return IdentityReport(residual=mean, se=se, dt=cfg.dt, n_paths=n_paths,
                          c_budget=c, predicted_bias=bias, extras=extras)


# --- generalized Ito test functions ---------------------------------------

@dataclass(frozen=True)
class GdeltaNormSq:
    """F(x) = g_delta(||x||_H^2) with g_delta(r) = r/(1+delta r); delta=0 gives r."""

    delta: float = 1.0

    def g(self, r):
        return r / (1.0 + self.delta * r)

    def g_prime(self, r):
        return 1.0 / (1.0 + self.delta * r) ** 2

    def g_second(self, r):
        return -2.0 * self.delta / (1.0 + self.delta * r) ** 3

    def value(self, space, x):
        return self.g(space.norm_H(x) ** 2)

    def grad(self, space, x):
        return 2.0 * self.g_prime(space.norm_H(x) ** 2)[..., None] * x

    def a_pairing(self, space, x):
        return 2.0 * self.g_prime(space.norm_H(x) ** 2) * space.norm_V_sq(x)

    def trace(self, space, bound, x):
        r = space.norm_H(x) ** 2
        coords = space.h * (x @ bound.emodes)  # (B, modes)
        quad = np.sum(bound.b ** 2 * coords ** 2, axis=-1)
        lin = np.sum(bound.b ** 2) * 2.0 * self.g_prime(r)
        return bound.sigma(x) ** 2 * (lin + 4.0 * self.g_second(r) * quad)


@dataclass(frozen=True)
class Cylindrical:
    """F(x) = phi(<x, e_k>_H) with phi in {cos, tanh}."""

    phi: str
    k: int = 1

    def _funcs(self):
        if self.phi == "cos":
            return np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)
        if self.phi == "tanh":
            return (np.tanh, lambda t: 1.0 / np.cosh(t) ** 2,
                    lambda t: -2.0 * np.tanh(t) / np.cosh(t) ** 2)
        raise ValueError(f"unsupported cylindrical profile {self.phi!r}")

    def _theta(self, space, x):
        return space.inner_H(x, space.mode(self.k))

    def value(self, space, x):
        f, _, _ = self._funcs()
        return f(self._theta(space, x))

    def grad(self, space, x):
        _, fp, _ = self._funcs()
        return fp(self._theta(space, x))[..., None] * space.mode(self.k)

    def a_pairing(self, space, x):
        _, fp, _ = self._funcs()
        lam = space.lambdas[self.k - 1]
        th = self._theta(space, x)
        return fp(th) * lam * th

    def trace(self, space, bound, x):
        _, _, fpp = self._funcs()
        if self.k > bound.modes:
            return np.zeros(np.asarray(x).shape[:-1])
        bk2 = bound.b[self.k - 1] ** 2
        return bound.sigma(x) ** 2 * bk2 * fpp(self._theta(space, x))


def _ito_general_block(space, eng, cfg, x0, F, master_seed, block):
    start, count = block
    tape = NoiseTape(master_seed, streams.DOMAIN_PATHS, start, count, eng.noise.modes)
    X = np.tile(np.asarray(x0, dtype=float), (count, 1))
    dt = cfg.dt
    acc = np.zeros(count)
    for m in range(cfg.n_steps):
        acc += dt * (F.a_pairing(space, X) - 0.5 * F.trace(space, eng.noise, X))
        grad = F.grad(space, X)
        z = tape.draws(m) if eng.noisy else None
        X, star, xi = eng.step(X, z)
        acc += dt * space.inner_H(xi, grad)
    x0a = np.asarray(x0, dtype=float)
    return F.value(space, X) - float(F.value(space, x0a)) + acc


def verify_ito_general(space: TripleSpace, graph: MonotoneGraph, noise, cfg: SchemeConfig,
                       x0, F, n_paths: int, master_seed: int, threads: int = 1,
                       halving: bool = True) -> IdentityReport:
    """Expectation residual of the generalized Ito identity for F(X(t)).

    The budget constant is measured by dt-halving (first-order Richardson
    slope) rather than derived, since F is arbitrary within the family.
    """
    if not hasattr(F, "grad"):
        raise ValueError(f"unsupported test function {F!r}")
    eng = StepEngine(space, graph, noise, cfg)
    out = map_blocks(
        lambda b: _ito_general_block(space, eng, cfg, x0, F, master_seed, b),
        path_blocks(n_paths, 1024), threads)
    resid = np.concatenate(out)
    mean = float(np.mean(resid))
    se = float(np.std(resid, ddof=1) / np.sqrt(n_paths))
    if halving:
        cfg2 = SchemeConfig(dt=cfg.dt / 2.0, horizon=cfg.horizon, mode=cfg.mode,
                            drift_form=cfg.drift_form, newton_tol=cfg.newton_tol)
        eng2 = StepEngine(space, graph, noise, cfg2)
        out2 = map_blocks(
            lambda b: _ito_general_block(space, eng2, cfg2, x0, F, master_seed, b),
            path_blocks(n_paths, 1024), threads)
        mean2 = float(np.mean(np.concatenate(out2)))
        bias = 2.0 * (mean - mean2)
        c = (1.5 * abs(bias) + 3.0 * se) / cfg.dt
    else:
        bias = math.nan
        c = 3.0 * max(1.0, abs(mean)) / cfg.dt
    return IdentityReport(residual=mean, se=se, dt=cfg.dt, n_paths=n_paths,
                          c_budget=c, predicted_bias=bias)
