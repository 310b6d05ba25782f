"""First and second variation flows along a frozen driving path.

For the smooth (mollified) dynamics the step map is

    X_{m+1} = W S(X_m + eta_m),      W = (I + dt A)^{-1},  S the drift substep,

and since the noise is additive the exact derivative of the discrete flow is

    Y_{m+1} = W [ S'(yhat_m) Y_m ],
    Z_{m+1} = W [ S'(yhat_m) Z_m + S''(yhat_m) Y_h,m Y_k,m ],

with yhat_m the recorded pre-drift states. S' = 1/(1 + dt beta'_{lam,n}(X*))
is a product of nonexpansive, order-preserving factors, so the H- and
L1-contraction of Y hold exactly, step by step. The flows here are exact
derivatives of the flow actually computed, which is what makes the
finite-difference Frechet tables decay linearly in eps with no dt floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drift import Mollified, make_substep
from .graphs import MonotoneGraph
from .integrator import PathOutput
from .space import TripleSpace
from . import streams


def _require_frozen(path: PathOutput):
    if path.config is None or not isinstance(path.config.drift_form, Mollified):
        raise ValueError("tangent flows need a frozen path in Mollified drift mode")
    if path.stars is None or path.yhats is None:
        raise ValueError("frozen path must be simulated with save_stars=True")


def _flow_pieces(space: TripleSpace, graph: MonotoneGraph, path: PathOutput):
    cfg = path.config
    sub = make_substep(graph, cfg.drift_form, cfg.dt)
    W = space.shifted_inverse_dense(cfg.dt)
    return sub, W, cfg.dt, path.stars, path.yhats


def solve_first_variation(space: TripleSpace, graph: MonotoneGraph,
                          path: PathOutput, h) -> np.ndarray:
    """Trajectory (M+1, N) of the first variation with Y_0 = h."""
    _require_frozen(path)
    sub, W, dt, stars, yhats = _flow_pieces(space, graph, path)
    M = stars.shape[0]
    Y = np.asarray(h, dtype=float).copy()
    traj = np.empty((M + 1, space.n))
    traj[0] = Y
    for m in range(M):
        damp = sub.derivative(yhats[m], stars[m])
        Y = (damp * Y) @ W
        traj[m + 1] = Y
    return traj


def solve_second_variation(space: TripleSpace, graph: MonotoneGraph,
                           path: PathOutput, y_h: np.ndarray,
                           y_k: np.ndarray) -> np.ndarray:
    """Trajectory (M+1, N) of the second variation, Z_0 = 0.

    y_h, y_k must be first-variation trajectories on the same frozen path.
    """
    _require_frozen(path)
    sub, W, dt, stars, yhats = _flow_pieces(space, graph, path)
    M = stars.shape[0]
    if y_h.shape != (M + 1, space.n) or y_k.shape != (M + 1, space.n):
        raise ValueError("first-variation trajectories do not match the frozen path")
    Z = np.zeros(space.n)
    traj = np.empty((M + 1, space.n))
    traj[0] = Z
    for m in range(M):
        damp = sub.derivative(yhats[m], stars[m])
        curv = sub.second_derivative(yhats[m], stars[m])
        Z = (damp * Z + curv * (y_h[m] * y_k[m])) @ W  # symmetric pairing first
        traj[m + 1] = Z
    return traj


def _propagate_batch(space, sub, W, stars, yhats, H, pair_idx=None,
                     per_step=None):
    """Shared batched propagation: H (D, N) directions, optional Z pairs.

    pair_idx: list of (i, j) into the direction rows; per_step(m, Y, Z) is a
    callback invoked after each step for trackers.
    """
    M = stars.shape[0]
    Y = np.array(H, dtype=float)
    Z = np.zeros((len(pair_idx), space.n)) if pair_idx else None
    if pair_idx:
        ii = np.array([i for i, _ in pair_idx])
        jj = np.array([j for _, j in pair_idx])
    for m in range(M):
        damp = sub.derivative(yhats[m], stars[m])
        if pair_idx:
            curv = sub.second_derivative(yhats[m], stars[m])
            Z = (damp * Z + curv * (Y[ii] * Y[jj])) @ W  # (P,N)@(N,N): single gemm
        Y = (damp * Y) @ W
        if per_step is not None:
            per_step(m, Y, Z)
    return Y, Z


@dataclass
class EstimateRow:
    name: str
    bound: float
    observed: float
    passed: bool
    detail: str = ""


@dataclass
class EstimateReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def verify_prop_estimates(space: TripleSpace, graph: MonotoneGraph,
                          path: PathOutput, trials: int,
                          master_seed: int) -> EstimateReport:
    """Contraction and smoothing estimates for the variation flows.

    (a) sup_t ||Y(t)||_H <= ||h||_H, exact, over random directions;
    (b) sup_t ||Z(t)||_H <= M ||h|| ||k||, M recorded;
    (c) ||Y(t)||_L1 <= ||h||_L1, exact;
    (d) ||Y(t)||_H <= M' (1 v t^{-1/2}) ||h||_{V'}, M' fitted over eigenmode
        probes (smoothing exponent 1/2: H is the interpolation midpoint
        between the dual and the energy space).
    """
    _require_frozen(path)
    sub, W, dt, stars, yhats = _flow_pieces(space, graph, path)
    rng = streams.path_stream(master_seed, streams.DOMAIN_PROBES, 0)
    H = rng.standard_normal((trials, space.n))
    h_norms = space.norm_H(H)
    l1_norms = space.norm_L1(H)
    pair_idx = [(2 * i, 2 * i + 1) for i in range(min(trials // 2, 64))]

    worst_h = np.zeros(trials)
    worst_l1 = np.zeros(trials)
    worst_z = np.zeros(len(pair_idx))

    def track(m, Y, Z):
        np.maximum(worst_h, space.norm_H(Y), out=worst_h)
        np.maximum(worst_l1, space.norm_L1(Y), out=worst_l1)
        if Z is not None:
            np.maximum(worst_z, space.norm_H(Z), out=worst_z)

    _propagate_batch(space, sub, W, stars, yhats, H, pair_idx, track)

    rows = []
    h_excess = float(np.max(worst_h / h_norms)) - 1.0
    rows.append(EstimateRow("tangent.H_contraction", 1e-12, h_excess,
                            h_excess <= 1e-12,
                            f"max ||Y||_C/||h||_H - 1 over {trials} directions"))
    l1_excess = float(np.max(worst_l1 / l1_norms)) - 1.0
    rows.append(EstimateRow("tangent.L1_contraction", 1e-12, l1_excess,
                            l1_excess <= 1e-12,
                            f"max ||Y||_L1/||h||_L1 - 1 over {trials} directions"))
    z_scale = np.array([h_norms[i] * h_norms[j] for i, j in pair_idx])
    m_const = float(np.max(worst_z / z_scale)) if len(pair_idx) else 0.0
    rows.append(EstimateRow("tangent.Z_bilinear_bound", math.inf, m_const,
                            math.isfinite(m_const),
                            f"M(lambda,n) = {m_const:.4g} over {len(pair_idx)} pairs"))

    # (d) smoothing along eigenmode probes, fitted prefactor
    probes = space.emodes.T.copy()            # rows e_k, ||e_k||_V' = lambda_k^{-1/2}
    vdual = space.lambdas ** -0.5
    M = stars.shape[0]
    ratio = np.zeros(space.n)

    def track_smooth(m, Y, Z):
        t = (m + 1) * dt
        env = max(1.0, t ** -0.5)
        np.maximum(ratio, space.norm_H(Y) / (env * vdual), out=ratio)

    _propagate_batch(space, sub, W, stars, yhats, probes, None, track_smooth)
    m_prime = float(np.max(ratio))
    rows.append(EstimateRow("tangent.smoothing_Mprime", 2.0, m_prime,
                            m_prime <= 2.0,
                            "||Y(t)|| <= M' (1 v t^-1/2) ||h||_V' on eigen probes"))
    return EstimateReport(rows=rows)


def crosscheck_variational_mild(space: TripleSpace, graph: MonotoneGraph,
                                path: PathOutput, h) -> float:
    """sup_t ||Y_variational(t) - Y_mild(t)||_H.

    The mild solver is the exponential-integrator recursion
    Y_{m+1} = e^{-dt A} (1 - dt b'_m) Y_m with the damping coefficient read
    off the variational substep (b' = (1/S' - 1)/dt), left-endpoint source.
    """
    _require_frozen(path)
    sub, W, dt, stars, yhats = _flow_pieces(space, graph, path)
    decay = np.exp(-space.lambdas * dt)
    # S(dt) in nodal coordinates: E diag(decay) E^T with H-weights
    Sdt = (space.emodes * decay) @ space.emodes.T * space.h
    Yv = np.asarray(h, dtype=float).copy()
    Ym = Yv.copy()
    worst = 0.0
    for m in range(stars.shape[0]):
        damp = sub.derivative(yhats[m], stars[m])
        bprime = (1.0 / damp - 1.0) / dt
        Yv = (damp * Yv) @ W
        Ym = Sdt @ ((1.0 - dt * bprime) * Ym)
        worst = max(worst, float(space.norm_H(Yv - Ym)))
    return worst


def fd_first_variation_errors(space, graph, noise, cfg, x0, h, eps_ladder,
                              master_seed, path_index: int = 0):
    """||(X^{x+eps h}_M - X^x_M)/eps - Y_M||_H for each eps, same noise path."""
    from .integrator import simulate  # local import to avoid a cycle

    base_cfg = cfg
    rng = streams.path_stream(master_seed, streams.DOMAIN_PATHS, path_index)
    base = simulate(space, graph, noise, base_cfg, x0, rng)
    y_traj = solve_first_variation(space, graph, base, h)
    errs = []
    for eps in eps_ladder:
        rng_eps = streams.path_stream(master_seed, streams.DOMAIN_PATHS, path_index)
        pert = simulate(space, graph, noise, base_cfg,
                        np.asarray(x0, dtype=float) + eps * np.asarray(h, dtype=float),
                        rng_eps)
        fd = (pert.final_state - base.final_state) / eps
        errs.append(float(space.norm_H(fd - y_traj[-1])))
    return errs, base


def fd_second_variation_errors(space, graph, noise, cfg, x0, h, k, eps_ladder,
                               master_seed, path_index: int = 0):
    """Second-difference Frechet table for Z along (h, k), shared noise."""
    from .integrator import simulate

    def run(start):
        rng = streams.path_stream(master_seed, streams.DOMAIN_PATHS, path_index)
        return simulate(space, graph, noise, cfg, start, rng)

    x0 = np.asarray(x0, dtype=float)
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    base = run(x0)
    yh = solve_first_variation(space, graph, base, h)
    yk = solve_first_variation(space, graph, base, k)
    z_traj = solve_second_variation(space, graph, base, yh, yk)
    errs = []
    for eps in eps_ladder:
        x_hk = run(x0 + eps * h + eps * k).final_state
        x_h = run(x0 + eps * h).final_state
        x_k = run(x0 + eps * k).final_state
        fd2 = (x_hk - x_h - x_k + base.final_state) / eps ** 2
        errs.append(float(space.norm_H(fd2 - z_traj[-1])))
    return errs


def fitted_slope(eps_ladder, errs) -> float:
    """Log-log slope of err(eps); close to 1 for a first-order table."""
    x = np.log(np.asarray(eps_ladder, dtype=float))
    y = np.log(np.maximum(np.asarray(errs, dtype=float), 1e-300))
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)
