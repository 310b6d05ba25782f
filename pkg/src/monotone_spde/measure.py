"""Invariant-measure estimation by long-run time averages, moment-bound
verification, and shared-noise mixing experiments.

The estimator is the ergodic one: a single long trajectory, sampled at a
stride after a burn-in window, with batch-means standard errors (the batch
length is far beyond the relaxation time 1/(2 lambda_1), so batches are
effectively independent). Accumulators are mergeable, so chains shard
cleanly across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .graphs import MonotoneGraph
from .integrator import NoiseTape, NumericError, SchemeConfig, StepEngine
from .noise import NoiseModel
from .parallel import map_blocks, path_blocks
from .space import TripleSpace

_BOUND_ATOL = 1e-30  # floor for "left side is zero" degenerate checks


@dataclass(frozen=True)
class MeasureConfig:
    burn_in: float
    horizon: float
    sample_stride: int = 10
    n_batches: int = 16
    retain: int = 64
    tail_ladder: tuple = (1.0, 2.0, 4.0, 8.0)
    chains: int = 1

    def __post_init__(self):
        if not (0.0 <= self.burn_in < self.horizon):
            raise ValueError("need 0 <= burn_in < horizon")
        if self.sample_stride < 1 or self.n_batches < 8 or self.chains < 1:
            raise ValueError("stride >= 1, batches >= 8, chains >= 1 required")


def functional_battery(space: TripleSpace, graph: MonotoneGraph,
                       tail_ladder=(1.0, 2.0, 4.0, 8.0)):
    """Names and evaluator for the test-functional battery.

    Bounded continuous probes (cos/tanh of low-mode coordinates, a Gaussian
    of the H-norm) plus the moment functionals of the a priori bounds; the
    conjugate integral uses the Young equality j*(beta0(u)) = u beta0(u) - j(u).
    """
    ks = list(range(1, min(4, space.n) + 1))
    names = ["normH2", "normV2", "j_int", "jstar_int", "coerc_sum"]
    names += [f"cos_e{k}" for k in ks]
    names += [f"tanh_e{k}" for k in ks]
    names += ["exp_negH2"]
    names += [f"tail_V_gt_{g:g}" for g in tail_ladder]
    modes = space.emodes[:, [k - 1 for k in ks]]

    def evaluate(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        h = space.h
        nh2 = space.norm_H(X) ** 2
        nv2 = space.norm_V_sq(X)
        jn = graph.potential(X)
        j_int = h * np.sum(jn, axis=-1)
        jstar_int = h * np.sum(X * graph.beta0(X) - jn, axis=-1)
        coerc = space.C_coercivity * nv2 + j_int + jstar_int
        theta = h * (X @ modes)
        cols = [nh2, nv2, j_int, jstar_int, coerc]
        cols += [np.cos(theta[:, i]) for i in range(len(ks))]
        cols += [np.tanh(theta[:, i]) for i in range(len(ks))]
        cols += [np.exp(-nh2)]
        nv = np.sqrt(nv2)
        cols += [(nv > g).astype(float) for g in tail_ladder]
        return np.stack(cols, axis=-1)

    return names, evaluate


@dataclass
class EmpiricalMeasure:
    """Mergeable time-average accumulator with batch-means errors."""

    names: list
    batch_sums: np.ndarray        # (B, F)
    batch_counts: np.ndarray      # (B,)
    retained: np.ndarray          # (R, N) snapshots
    nonfinite: int = 0
    meta: dict = field(default_factory=dict)

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        if self.names != other.names:
            raise ValueError("battery mismatch")
        return EmpiricalMeasure(
            names=self.names,
            batch_sums=np.vstack([self.batch_sums, other.batch_sums]),
            batch_counts=np.concatenate([self.batch_counts, other.batch_counts]),
            retained=np.vstack([self.retained, other.retained]),
            nonfinite=self.nonfinite + other.nonfinite,
            meta=self.meta,
        )

    @property
    def n_samples(self) -> int:
        return int(np.sum(self.batch_counts))

    def estimate(self, name: str) -> tuple[float, float]:
        """(time average, batch-means standard error)."""
        j = self.names.index(name)
        means = self.batch_sums[:, j] / self.batch_counts
        grand = float(np.sum(self.batch_sums[:, j]) / np.sum(self.batch_counts))
        nb = len(means)
        if nb < 8:
            raise ValueError("batch count below 8; variance not reportable")
        se = float(np.std(means, ddof=1) / math.sqrt(nb))
        return grand, se

    def estimates(self) -> dict:
        return {name: self.estimate(name) for name in self.names}


def estimate_invariant(space: TripleSpace, graph: MonotoneGraph,
                       noise: NoiseModel, cfg: SchemeConfig, x0,
                       mcfg: MeasureConfig, master_seed: int,
                       threads: int = 1) -> EmpiricalMeasure:
    """Time-averaged functionals along one (or a few) long trajectories."""
    names, evaluate = functional_battery(space, graph, mcfg.tail_ladder)
    run_cfg = SchemeConfig(dt=cfg.dt, horizon=mcfg.horizon, mode=cfg.mode,
                           drift_form=cfg.drift_form, newton_tol=cfg.newton_tol)
    total_steps = run_cfg.n_steps
    burn_steps = int(round(mcfg.burn_in / cfg.dt))
    sample_steps = [m for m in range(burn_steps + 1, total_steps + 1)
                    if (m - burn_steps) % mcfg.sample_stride == 0]
    n_samples = len(sample_steps)
    if n_samples < mcfg.n_batches:
        raise ValueError("horizon too short for the requested batches")
    retain_every = max(1, n_samples // max(1, mcfg.retain))

    def run_chain(chain) -> EmpiricalMeasure:
        chain_idx, _ = chain
        eng = StepEngine(space, graph, noise, run_cfg)
        rng = streams.path_stream(master_seed, streams.DOMAIN_MEASURE, chain_idx)
        X = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
        sums = np.zeros((mcfg.n_batches, len(names)))
        counts = np.zeros(mcfg.n_batches)
        retained = []
        nonfinite = 0
        want = set(sample_steps)
        sample_i = 0
        for m in range(total_steps):
            z = rng.standard_normal((1, eng.noise.modes)) if eng.noisy else None
            X, _, _ = eng.step(X, z)
            if (m + 1) in want:
                if not np.all(np.isfinite(X)):
                    raise NumericError(f"non-finite state at step {m + 1}")
                vals = evaluate(X)[0]
                nonfinite += int(np.count_nonzero(~np.isfinite(vals)))
                b = sample_i * mcfg.n_batches // n_samples
                sums[b] += vals
                counts[b] += 1
                if sample_i % retain_every == 0 and len(retained) < mcfg.retain:
                    retained.append(X[0].copy())
                sample_i += 1
        return EmpiricalMeasure(
            names=names, batch_sums=sums, batch_counts=counts,
            retained=np.array(retained), nonfinite=nonfinite,
            meta={"dt": cfg.dt, "burn_in": mcfg.burn_in,
                  "horizon": mcfg.horizon, "stride": mcfg.sample_stride,
                  "chain": chain_idx})

    chains = [(c, 1) for c in range(mcfg.chains)]
    results = map_blocks(run_chain, chains, threads)
    em = results[0]
    for other in results[1:]:
        em = em.merge(other)
    return em


# ---------------------------------------------------------------------------
# Moment / support / tail bound checks
# ---------------------------------------------------------------------------

@dataclass
class BoundRow:
    name: str
    estimate: float
    se: float
    bound: float
    slack: float
    passed: bool


@dataclass
class BoundReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def check_moment_bounds(em: EmpiricalMeasure, space: TripleSpace,
                        bound_noise) -> BoundReport:
    """A priori inequalities satisfied by every invariant measure.

    With C = 1, K = lambda_min^{-1/2}, C0 = ||B||_HS^2 / 2:
      E||x||_H^2                          <= K^2 C0 / C
      C E||x||_V^2 + E int j + E int j*   <= K^2 C0 / (2C) + C0
      mu{||x||_V > n}                     <= C0 / (C n^2)
    plus full-mass support on the finiteness sets of the two integrals.
    """
    C, C0 = bound_noise.coercivity_constants()
    K2 = space.K_embed ** 2
    rows = []

    est, se = em.estimate("normH2")
    b = K2 * C0 / C
    rows.append(BoundRow("H2_moment", est, se, b, b + 3 * se - est,
                         est <= b + 3 * se + _BOUND_ATOL))

    est, se = em.estimate("coerc_sum")
    b = K2 * C0 / (2 * C) + C0
    rows.append(BoundRow("V_j_jstar_moment", est, se, b, b + 3 * se - est,
                         est <= b + 3 * se + _BOUND_ATOL))

    ladder = em.meta.get("tail_ladder") or [
        float(n.split("_")[-1]) for n in em.names if n.startswith("tail_V_gt_")]
    for g in ladder:
        est, se = em.estimate(f"tail_V_gt_{g:g}")
        b = C0 / (C * g * g)
        rows.append(BoundRow(f"tail_V_gt_{g:g}", est, se, b, b + 3 * se - est,
                             est <= b + 3 * se + _BOUND_ATOL))

    frac = 1.0 if em.nonfinite == 0 else 0.0
    rows.append(BoundRow("support_finite_j_jstar", frac, 0.0, 1.0,
                         frac - 1.0, em.nonfinite == 0))
    return BoundReport(rows=rows)


# ---------------------------------------------------------------------------
# Mixing experiment (shared-noise coupling)
# ---------------------------------------------------------------------------

@dataclass
class MixingReport:
    times: np.ndarray
    coupled_m2: np.ndarray      # E||X^x - X^y||_H^2 at each time
    se: np.ndarray
    envelope: np.ndarray
    gaps: dict                   # name -> array over times (if reference given)
    contraction_violations: int
    slope: float                 # log-log decay rate over positive entries
    c_tilde: float
    delta: float

    @property
    def envelope_ok(self) -> bool:
        return bool(np.all(self.coupled_m2 <= self.envelope + 3.0 * self.se))


def mixing_envelope(graph: MonotoneGraph) -> tuple[float, float]:
    """(c_tilde, delta) for the coupled-decay ODE y' + c_tilde y^{1+delta/2} <= 0.

    Derivation: the energy identity for the shared-noise difference gives
    d/dt E||d||^2 <= -2 E<xi_1 - xi_2, d> <= -2c E int |d|^{2+delta}; Jensen
    on the unit-volume domain and in expectation turns the right side into
    -2c (E||d||^2)^{1+delta/2}. Hence c_tilde = 2c.
    """
    sup = graph.superlinearity()
    if sup is None:
        raise ValueError(f"graph {graph.name} has no known superlinearity constants")
    c, delta = sup
    return 2.0 * c, delta


def envelope_value(c_tilde: float, delta: float, t: np.ndarray) -> np.ndarray:
    """sup over initial data of the decay ODE solution:
    y(t; y0) = (y0^{-delta/2} + c_tilde (delta/2) t)^{-2/delta} -> (c_tilde (delta/2) t)^{-2/delta}."""
    return (c_tilde * 0.5 * delta * np.asarray(t, dtype=float)) ** (-2.0 / delta)


def mixing_experiment(space: TripleSpace, graph: MonotoneGraph, noise: NoiseModel,
                      cfg: SchemeConfig, x, y, n_pairs: int, times,
                      master_seed: int, threads: int = 1,
                      reference: EmpiricalMeasure | None = None) -> MixingReport:
    """Coupled second moments under shared noise, against the closed envelope."""
    c_tilde, delta = mixing_envelope(graph)
    times = np.sort(np.asarray(times, dtype=float))
    horizon = float(times[-1])
    run_cfg = SchemeConfig(dt=cfg.dt, horizon=horizon, mode=cfg.mode,
                           drift_form=cfg.drift_form, newton_tol=cfg.newton_tol)
    eng = StepEngine(space, graph, noise, run_cfg)
    steps_at = [int(round(t / cfg.dt)) for t in times]
    total = run_cfg.n_steps
    names, evaluate = functional_battery(space, graph)
    gap_names = [n for n in names if n.startswith(("cos_", "tanh_", "exp_"))]
    gap_cols = [names.index(n) for n in gap_names]

    # chains are merged once they meet at floating resolution: below this
    # relative gap the pair is numerically one chain, and keeping both alive
    # only leaves root-finder rounding noise in the difference
    meet_rel = 1e-12

    def worker(block):
        start, count = block
        tape = NoiseTape(master_seed, streams.DOMAIN_COUPLED, start, count,
                         eng.noise.modes)
        X = np.tile(np.asarray(x, dtype=float), (count, 1))
        Y = np.tile(np.asarray(y, dtype=float), (count, 1))
        d2_prev = space.norm_H(X - Y) ** 2
        viols = 0
        snap = {}
        phi = {}
        for m in range(total):
            z = tape.draws(m) if eng.noisy else None
            X, _, _ = eng.step(X, z)
            Y, _, _ = eng.step(Y, z)
            d = space.norm_H(X - Y)
            d2 = d * d
            viols += int(np.count_nonzero(d2 > d2_prev))
            met = d <= meet_rel * np.maximum(space.norm_H(X), space.norm_H(Y))
            if np.any(met):
                Y[met] = X[met]
                d2 = np.where(met, 0.0, d2)
            d2_prev = d2
            if (m + 1) in steps_at:
                snap[m + 1] = d2.copy()
                phi[m + 1] = evaluate(X)[:, gap_cols]
        return snap, viols, phi

    results = map_blocks(worker, path_blocks(n_pairs, 512), threads)
    viols = sum(r[1] for r in results)
    m2 = np.empty(len(times))
    se = np.empty(len(times))
    gaps = {n: np.empty(len(times)) for n in gap_names}
    for j, s in enumerate(steps_at):
        vals = np.concatenate([r[0][s] for r in results])
        m2[j] = float(np.mean(vals))
        se[j] = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        phis = np.concatenate([r[2][s] for r in results], axis=0)
        for i, n in enumerate(gap_names):
            if reference is not None:
                ref, _ = reference.estimate(n)
                gaps[n][j] = abs(float(np.mean(phis[:, i])) - ref)
            else:
                gaps[n][j] = math.nan

    env = envelope_value(c_tilde, delta, times)
    pos = m2 > 0.0
    if np.count_nonzero(pos) >= 2:
        lx = np.log(times[pos])
        ly = np.log(m2[pos])
        A = np.vstack([lx, np.ones_like(lx)]).T
        slope = float(np.linalg.lstsq(A, ly, rcond=None)[0][0])
    else:
        slope = -math.inf
    return MixingReport(times=times, coupled_m2=m2, se=se, envelope=env,
                        gaps=gaps if reference is not None else {},
                        contraction_violations=viols, slope=slope,
                        c_tilde=c_tilde, delta=delta)
