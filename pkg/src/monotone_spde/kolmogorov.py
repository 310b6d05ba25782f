"""Monte Carlo resolvent for the regularized stationary Kolmogorov equation.

For additive noise and the smooth (mollified) drift, the candidate solution
of alpha v + L0 v = g is the discounted occupation integral

    v(x) = E int_0^inf e^{-alpha t} g(X^x(t)) dt,

truncated at T_max with e^{-alpha T_max} <= 1e-6 and discretized with
trapezoid weights. Derivatives ride along the paths:

    Dv(x) h      = E int e^{-alpha t} Dg(X) . Y_h dt
    D2v(x)(h,k)  = E int e^{-alpha t} [D2g(Y_h, Y_k) + Dg . Z_hk] dt

with the exact discrete tangent flows. Per-path samples are retained so the
residual of alpha v + L0 v - g propagates its standard error through the
joint per-path scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import graphs, streams
from .drift import Mollified, make_substep
from .graphs import MonotoneGraph
from .integrator import NoiseTape, SchemeConfig
from .measure import EmpiricalMeasure
from .noise import BoundNoise, NoiseModel
from .parallel import map_blocks, path_blocks
from .space import TripleSpace

TRUNCATION = 1e-6
TRACE_CUTOFF = 1e-10


def _se(samples: np.ndarray) -> float:
    n = len(samples)
    if n < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# Cylindrical test functions with closed-form gradient and Hessian
# ---------------------------------------------------------------------------

_FACTORS = {
    "cos": (np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t), 1.0),
    "tanh": (np.tanh, lambda t: 1.0 / np.cosh(t) ** 2,
             lambda t: -2.0 * np.tanh(t) / np.cosh(t) ** 2, 1.0),
    "gauss": (lambda t: np.exp(-0.5 * t * t), lambda t: -t * np.exp(-0.5 * t * t),
              lambda t: (t * t - 1.0) * np.exp(-0.5 * t * t), math.exp(-0.5)),
    "const": (np.ones_like, np.zeros_like, np.zeros_like, 0.0),
}


@dataclass(frozen=True)
class TestFunction:
    """g(x) = prod_j f(<x, e_{k_j}>_H) with f in {cos, tanh, gauss factor}."""

    kind: str = "cos"
    modes: tuple = (1,)

    def __post_init__(self):
        if self.kind not in _FACTORS:
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if len(self.modes) == 0:
            raise ValueError("needs at least one mode")

    def coords(self, space: TripleSpace, x) -> np.ndarray:
        return np.atleast_2d(space.mode_coords(x, self.modes))

    def value_from(self, th: np.ndarray) -> np.ndarray:
        f = _FACTORS[self.kind][0]
        return np.prod(f(th), axis=-1)

    def grad_coords(self, th: np.ndarray) -> np.ndarray:
        f, fp, _, _ = _FACTORS[self.kind]
        F = f(th)
        m = th.shape[-1]
        out = np.empty_like(th)
        for j in range(m):
            idx = [l for l in range(m) if l != j]
            rest = np.prod(F[..., idx], axis=-1) if idx else 1.0
            out[..., j] = fp(th[..., j]) * rest
        return out

    def hess_coords(self, th: np.ndarray) -> np.ndarray:
        f, fp, fpp, _ = _FACTORS[self.kind]
        F = f(th)
        m = th.shape[-1]
        out = np.empty(th.shape[:-1] + (m, m))
        for i in range(m):
            for j in range(m):
                idx = [l for l in range(m) if l not in (i, j)]
                rest = np.prod(F[..., idx], axis=-1) if idx else 1.0
                if i == j:
                    out[..., i, j] = fpp(th[..., i]) * rest
                else:
                    out[..., i, j] = fp(th[..., i]) * fp(th[..., j]) * rest
        return out

    def value(self, space: TripleSpace, x) -> np.ndarray:
        return self.value_from(self.coords(space, x))

    def grad_field(self, space: TripleSpace, th: np.ndarray) -> np.ndarray:
        cols = space.emodes[:, [k - 1 for k in self.modes]]
        return self.grad_coords(th) @ cols.T

    # sup constants for the domain-membership bounds of cylindrical g
    @property
    def value_sup(self) -> float:
        return 1.0

    @property
    def coord_grad_sup(self) -> float:
        return _FACTORS[self.kind][3]

    def grad_sup_H(self) -> float:
        return math.sqrt(len(self.modes)) * self.coord_grad_sup

    def grad_sup_Linf(self, space: TripleSpace) -> float:
        emax = max(float(np.max(np.abs(space.mode(k)))) for k in self.modes)
        return len(self.modes) * self.coord_grad_sup * emax


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------

@dataclass
class ResolventEstimate:
    x: np.ndarray
    alpha: float
    lam: float
    n: int
    dt: float
    t_max: float
    n_paths: int
    v: float = math.nan
    se_v: float = math.nan
    v_samples: np.ndarray | None = None
    dv_basis: bool = False
    dv_mean: np.ndarray | None = None         # (C,) along the probed directions
    dv_samples: np.ndarray | None = None      # (P, C)
    directions: np.ndarray | None = None      # (C, N)
    d2v_modes: tuple = ()
    d2v_mean: np.ndarray | None = None        # (K,)
    d2v_samples: np.ndarray | None = None     # (P, K)
    meta: dict = field(default_factory=dict)

    def dv_vector(self, space: TripleSpace) -> np.ndarray:
        """Gradient reconstructed on the grid (needs the full basis probes)."""
        if not self.dv_basis or self.dv_mean is None:
            raise ValueError("gradient vector needs basis-direction probes")
        return space.emodes @ self.dv_mean

    def dv_along(self, space: TripleSpace, h) -> float:
        if not self.dv_basis or self.dv_mean is None:
            raise ValueError("directional read-off needs basis-direction probes")
        coords = space.mode_coords(h, range(1, space.n + 1))
        return float(self.dv_mean @ np.asarray(coords, dtype=float).ravel())


def _engine_checks(graph: MonotoneGraph, bound: BoundNoise, cfg: SchemeConfig,
                   alpha: float):
    if not bound.additive:
        raise ValueError("resolvent estimates need additive noise")
    if not isinstance(cfg.drift_form, Mollified):
        raise ValueError("resolvent estimates need the Mollified drift form")
    if not graph.is_function:
        raise ValueError("jump graphs are not admitted here")
    if not (alpha > 0.0):
        raise ValueError("alpha must be positive")


def _horizon_steps(alpha: float, dt: float) -> int:
    return int(math.ceil(math.log(1.0 / TRUNCATION) / (alpha * dt)))


def _run_paths(space, graph, noise, cfg, tf, x, alpha, n_paths, master_seed,
               dirs, pair_idx, threads, x_per_path=None, dirs_per_path=None):
    """Batched discounted-occupation run; returns per-path (v, dv, d2v).

    dirs: (C, N) shared tangent directions, or None; dirs_per_path /
    x_per_path: (P, N) per-path variants (used by the gap estimator).
    pair_idx: list of (i, j) into the direction rows for second variations.
    """
    bound = noise.bind(space) if isinstance(noise, NoiseModel) else noise
    _engine_checks(graph, bound, cfg, alpha)
    sub = make_substep(graph, cfg.drift_form, cfg.dt)
    W = space.shifted_inverse_dense(cfg.dt)
    dt = cfg.dt
    M = _horizon_steps(alpha, dt)
    h_mesh = space.h
    want_d2 = bool(pair_idx)
    if want_d2:
        ii = np.array([i for i, _ in pair_idx])
        jj = np.array([j for _, j in pair_idx])
    tf_cols = space.emodes[:, [k - 1 for k in tf.modes]]

    def worker(block):
        start, count = block
        tape = NoiseTape(master_seed, streams.DOMAIN_PATHS, start, count,
                         bound.modes)
        if x_per_path is not None:
            X = x_per_path[start:start + count].copy()
        else:
            X = np.tile(np.asarray(x, dtype=float), (count, 1))
        T = None
        if dirs_per_path is not None:
            T = dirs_per_path[start:start + count][:, None, :].copy()
        elif dirs is not None:
            T = np.tile(np.asarray(dirs, dtype=float), (count, 1, 1))
        Zp = np.zeros((count, len(pair_idx), space.n)) if want_d2 else None
        v = np.zeros(count)
        dv = np.zeros((count, T.shape[1])) if T is not None else None
        d2 = np.zeros((count, len(pair_idx))) if want_d2 else None
        for m in range(M + 1):
            w = dt * math.exp(-alpha * m * dt)
            if m == 0 or m == M:
                w *= 0.5
            th = tf.coords(space, X)
            v += w * tf.value_from(th)
            if T is not None:
                grad = tf.grad_field(space, th)
                dv += w * h_mesh * np.einsum("bcn,bn->bc", T, grad)
            if want_d2:
                tc = h_mesh * (T @ tf_cols)          # (B, C, m)
                quad = np.einsum("bau,buv,bav->ba", tc[:, ii], tf.hess_coords(th),
                                 tc[:, jj])
                dgz = h_mesh * np.einsum("bpn,bn->bp", Zp, grad)
                d2 += w * (quad + dgz)
            if m == M:
                break
            z = tape.draws(m) if bound.hs_norm_sq > 0.0 else None
            yhat = X + (bound.transform(z, dt) if z is not None else 0.0)
            star = sub.apply(yhat)
            damp = sub.derivative(yhat, star)
            if want_d2:
                curv = sub.second_derivative(yhat, star)
                Zp = damp[:, None, :] * Zp + curv[:, None, :] * (T[:, ii] * T[:, jj])
                # one flat gemm instead of per-path matmuls
                Zp = (Zp.reshape(-1, space.n) @ W).reshape(Zp.shape)
            if T is not None:
                T = damp[:, None, :] * T
                T = (T.reshape(-1, space.n) @ W).reshape(T.shape)
            X = star @ W
        return v, dv, d2

    blocks = path_blocks(n_paths, 1024)
    out = map_blocks(worker, blocks, threads)
    v = np.concatenate([o[0] for o in out])
    dv = np.concatenate([o[1] for o in out]) if dirs is not None or dirs_per_path is not None else None
    d2 = np.concatenate([o[2] for o in out]) if want_d2 else None
    return v, dv, d2, M * dt


def _base_estimate(x, cfg, alpha, n_paths, t_max) -> ResolventEstimate:
    form = cfg.drift_form
    return ResolventEstimate(x=np.asarray(x, dtype=float).copy(), alpha=alpha,
                             lam=form.lam, n=form.n, dt=cfg.dt, t_max=t_max,
                             n_paths=n_paths)


def estimate_v(space, graph, noise, cfg, tf: TestFunction, x, alpha: float,
               n_paths: int, master_seed: int, threads: int = 1) -> ResolventEstimate:
    """Monte Carlo discounted-occupation estimate of v(x)."""
    v, _, _, t_max = _run_paths(space, graph, noise, cfg, tf, x, alpha, n_paths,
                                master_seed, None, None, threads)
    est = _base_estimate(x, cfg, alpha, n_paths, t_max)
    est.v = float(np.mean(v))
    est.se_v = _se(v)
    est.v_samples = v
    return est


def _basis_dirs(space: TripleSpace) -> np.ndarray:
    return space.emodes.T.copy()


def estimate_Dv(space, graph, noise, cfg, tf: TestFunction, x, alpha: float,
                n_paths: int, master_seed: int, directions=None,
                threads: int = 1) -> ResolventEstimate:
    """First-derivative estimate along the given directions (default: the
    full eigenbasis, from which the gradient field is reconstructed).

    Re-simulates the same per-path streams as estimate_v (common random
    numbers by construction), so the pieces combine consistently.
    """
    basis = directions is None
    dirs = _basis_dirs(space) if basis else np.atleast_2d(np.asarray(directions, dtype=float))
    v, dv, _, t_max = _run_paths(space, graph, noise, cfg, tf, x, alpha, n_paths,
                                 master_seed, dirs, None, threads)
    est = _base_estimate(x, cfg, alpha, n_paths, t_max)
    est.v = float(np.mean(v))
    est.se_v = _se(v)
    est.v_samples = v
    est.dv_basis = basis
    est.directions = dirs
    est.dv_samples = dv
    est.dv_mean = dv.mean(axis=0)
    return est


def active_trace_modes(bound: BoundNoise) -> list[int]:
    return [k + 1 for k in range(bound.modes) if bound.b[k] ** 2 >= TRACE_CUTOFF]


def estimate_D2v(space, graph, noise, cfg, tf: TestFunction, x, alpha: float,
                 n_paths: int, master_seed: int, pairs=None,
                 threads: int = 1) -> ResolventEstimate:
    """Second-derivative estimate; default pairs are (e_k, e_k) over the
    noise modes above the trace cutoff, riding on full-basis first variations."""
    bound = noise.bind(space) if isinstance(noise, NoiseModel) else noise
    if pairs is None:
        modes = active_trace_modes(bound)
        dirs = _basis_dirs(space)
        pair_idx = [(k - 1, k - 1) for k in modes]
        basis = True
    else:
        stack = []
        pair_idx = []
        for (h, k) in pairs:
            stack.append(np.asarray(h, dtype=float))
            stack.append(np.asarray(k, dtype=float))
            pair_idx.append((len(stack) - 2, len(stack) - 1))
        dirs = np.vstack(stack)
        modes = ()
        basis = False
    v, dv, d2, t_max = _run_paths(space, graph, noise, cfg, tf, x, alpha,
                                  n_paths, master_seed, dirs, pair_idx, threads)
    est = _base_estimate(x, cfg, alpha, n_paths, t_max)
    est.v = float(np.mean(v))
    est.se_v = _se(v)
    est.v_samples = v
    est.dv_basis = basis
    est.directions = dirs
    est.dv_samples = dv
    est.dv_mean = dv.mean(axis=0)
    est.d2v_modes = tuple(modes)
    est.d2v_samples = d2
    est.d2v_mean = d2.mean(axis=0)
    return est


def full_estimate(space, graph, noise, cfg, tf: TestFunction, x, alpha: float,
                  n_paths: int, master_seed: int, threads: int = 1) -> ResolventEstimate:
    """Fused v / Dv / D2v pass (bitwise identical to the separate ops)."""
    return estimate_D2v(space, graph, noise, cfg, tf, x, alpha, n_paths,
                        master_seed, pairs=None, threads=threads)


# ---------------------------------------------------------------------------
# Residual of the regularized stationary equation
# ---------------------------------------------------------------------------

def residual_L0(space: TripleSpace, graph: MonotoneGraph, noise, tf: TestFunction,
                est: ResolventEstimate) -> tuple[float, float]:
    """alpha v + L0 v - g at the probe, with propagated standard error.

    L0 v = -1/2 sum_k b_k^2 D2v(e_k,e_k) + <Ax, Dv> + <beta_{lam,n}(x), Dv>,
    the gradient reconstructed from the basis probes.
    """
    bound = noise.bind(space) if isinstance(noise, NoiseModel) else noise
    if not (est.dv_basis and est.dv_samples is not None
            and est.dv_samples.shape[1] == space.n):
        raise ValueError("residual needs Dv probes along the full eigenbasis")
    needed = active_trace_modes(bound)
    have = set(est.d2v_modes)
    missing = [k for k in needed if k not in have]
    if missing:
        raise ValueError(f"residual needs D2v along (e_k,e_k) for modes {missing}")
    reg = graphs.RegularizedDrift(est.lam, est.n)
    coords = space.mode_coords(est.x, range(1, space.n + 1)).ravel()
    a_coef = space.lambdas * coords
    b_coef = space.mode_coords(
        graphs.mollified_drift(reg, graph, est.x), range(1, space.n + 1)).ravel()
    lin = est.dv_samples @ (a_coef + b_coef)
    cols = [est.d2v_modes.index(k) for k in needed]
    b2 = np.array([bound.b[k - 1] ** 2 for k in needed])
    trace = est.d2v_samples[:, cols] @ b2
    g_x = float(tf.value(space, est.x)[0])
    samples = est.alpha * est.v_samples - 0.5 * trace + lin - g_x
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(len(samples)))


def check_c1_bounds(space: TripleSpace, tf: TestFunction, est: ResolventEstimate,
                    master_seed: int, trials: int = 64) -> dict:
    """Uniform first-derivative bounds of the resolvent estimate.

    H bound: ||Dv||_H <= ||Dg||_{C(H;H)} / alpha; L1 bound along random h:
    |Dv h| <= ||Dg||_{C(H;Linf)} ||h||_L1 / alpha (+3 SE on the estimate).
    """
    dvec = est.dv_vector(space)
    se_vec = float(np.sqrt(np.sum(est.dv_samples.std(axis=0, ddof=1) ** 2
                                  / est.dv_samples.shape[0])))
    h_bound = tf.grad_sup_H() / est.alpha
    h_norm = float(space.norm_H(dvec))
    rng = streams.path_stream(master_seed, streams.DOMAIN_PROBES, 7)
    hs = rng.standard_normal((trials, space.n))
    vals = np.abs(hs @ (space.h * dvec))
    linf_bound = tf.grad_sup_Linf(space) / est.alpha
    ratio = float(np.max(vals / (linf_bound * space.norm_L1(hs) + 1e-300)))
    return {
        "dv_H_norm": h_norm,
        "dv_H_bound": h_bound,
        "dv_H_ok": h_norm <= h_bound + 3.0 * se_vec,
        "dv_L1_worst_ratio": ratio,
        "dv_L1_ok": ratio <= 1.0 + 3.0 * se_vec / max(1e-300, linf_bound),
        "se_vec": se_vec,
    }


# ---------------------------------------------------------------------------
# Drift-replacement gap (the regularization-limit diagnostic)
# ---------------------------------------------------------------------------

@dataclass
class GapTable:
    lambdas: tuple
    ns: tuple
    gap: np.ndarray   # (len(lambdas), len(ns))
    se: np.ndarray

    def monotone_in_n(self, tol_sigma: float = 2.0) -> bool:
        for i in range(self.gap.shape[0]):
            for j in range(self.gap.shape[1] - 1):
                allowance = tol_sigma * math.hypot(self.se[i, j], self.se[i, j + 1])
                if self.gap[i, j + 1] > self.gap[i, j] + allowance:
                    return False
        return True

    def monotone_in_lambda_saturated(self, tol_sigma: float = 2.0) -> bool:
        j = self.gap.shape[1] - 1
        for i in range(self.gap.shape[0] - 1):
            allowance = tol_sigma * math.hypot(self.se[i, j], self.se[i + 1, j])
            if self.gap[i + 1, j] > self.gap[i, j] + allowance:
                return False
        return True


def drift_replacement_gap(space: TripleSpace, graph: MonotoneGraph, noise,
                          em: EmpiricalMeasure, tf: TestFunction,
                          lambdas, ns, master_seed: int, dt: float = 0.02,
                          alpha: float = 2.0, n_paths: int = 192,
                          max_samples: int = 12, threads: int = 1) -> GapTable:
    """Table of int |<beta_{lam,n}(x) - beta(x), Dv_{lam,n}(x)>| d mu-hat.

    Only the directional derivative along w = beta_{lam,n}(x) - beta(x) is
    needed per retained sample, so each cell couples one tangent column per
    path. Streams are shared across cells (common random numbers) so the
    monotonicity comparisons see correlated errors.
    """
    if em.retained is None or len(em.retained) == 0:
        raise ValueError("empty retained sample set")
    xs = em.retained[:max_samples]
    S = xs.shape[0]
    lambdas = tuple(float(v) for v in lambdas)
    ns = tuple(int(v) for v in ns)
    gap = np.zeros((len(lambdas), len(ns)))
    se = np.zeros_like(gap)
    for i, lam in enumerate(lambdas):
        for j, n in enumerate(ns):
            reg = graphs.RegularizedDrift(lam, n)
            w = graphs.mollified_drift(reg, graph, xs) - graph.beta0(xs)
            if float(np.max(np.abs(w))) == 0.0:
                continue
            cfg = SchemeConfig(dt=dt, horizon=1.0, drift_form=Mollified(lam, n))
            x_pp = np.repeat(xs, n_paths, axis=0)
            w_pp = np.repeat(w, n_paths, axis=0)
            _, dv, _, _ = _run_paths(space, graph, noise, cfg, tf, None, alpha,
                                     S * n_paths, master_seed, None, None,
                                     threads, x_per_path=x_pp, dirs_per_path=w_pp)
            per_sample = dv[:, 0].reshape(S, n_paths)
            d_mean = per_sample.mean(axis=1)
            d_se = per_sample.std(axis=1, ddof=1) / math.sqrt(n_paths)
            gap[i, j] = float(np.mean(np.abs(d_mean)))
            se[i, j] = float(np.sqrt(np.sum(d_se ** 2)) / S)
    return GapTable(lambdas=lambdas, ns=ns, gap=gap, se=se)
