"""Experiment harness: subcommands, deterministic seeding, CSV persistence.

Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 bound violation.
All numeric output is a pure function of (config, master seed); the thread
count only changes scheduling.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import graphs, kolmogorov, measure, streams, tangent
from .config import (ConfigError, RunConfig, build_graph, build_noise,
                     build_space, load_config, measure_config, scheme)
from .drift import Mollified
from .graphs import ResolventError, SymmetryFailure
from .integrator import NumericError, simulate, verify_ito_square
from .noise import validate_noise
from .parallel import resolve_threads
from .space import validate_assumptions

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_BOUND = 4


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except Exception:
        return "unknown"


def _write_summary(rc: RunConfig, command: str, checks, wall: float,
                   exit_code: int) -> None:
    payload = {
        "command": command,
        "seed": rc.master_seed,
        "threads": rc.threads,
        "build": _git_describe(),
        "wall_time_s": round(wall, 3),
        "exit_code": exit_code,
        "checks": [{"name": n, "passed": bool(p), "detail": str(d)}
                   for n, p, d in checks],
        "config": rc.echo(),
    }
    out = Path(rc.out_dir) / f"{command}_summary.json"
    out.write_text(json.dumps(payload, indent=2, default=str) + "\n",
                   encoding="utf-8")


def _exit_from(checks) -> int:
    return EXIT_OK if all(p for _, p, _ in checks) else EXIT_BOUND


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    bound = build_noise(rc).bind(space)
    rng = streams.path_stream(rc.master_seed, streams.DOMAIN_VALIDATE, 0)
    report = validate_assumptions(space, trials=rc.validate_trials, rng=rng)
    checks = list(report.rows)
    checks += graphs.validate_graph(graph, rng)
    cert = graphs.symmetry_certificate(graph)
    if isinstance(cert, SymmetryFailure):
        detail = "assumption (vi) growth-symmetry scan diverges: " + ", ".join(
            f"ratio({r:g})={q:.3g}" for r, q in cert.ratios)
        checks.append(("drift.growth_symmetry", False, detail))
    else:
        checks.append(("drift.growth_symmetry", True,
                       f"M1={cert.M1:g}, R={cert.R:g}, M2={cert.M2:g}, eta={cert.eta:g}"))
    checks += validate_noise(bound, rng)
    _write_csv(Path(rc.out_dir) / "validation.csv",
               ["check", "passed", "detail"],
               [(n, p, d) for n, p, d in checks])
    return _exit_from(checks), checks


def cmd_simulate(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    noise = build_noise(rc)
    stride = rc.save_stride if rc.save_stride > 0 else max(
        1, scheme(rc).n_steps // 50)
    cfg = scheme(rc, save_stride=stride)
    rows = []
    for p in range(max(1, rc.save_paths)):
        rng = streams.path_stream(rc.master_seed, streams.DOMAIN_PATHS, p)
        out = simulate(space, graph, noise, cfg, np.zeros(space.n), rng)
        for t, nh2, nv2, ji, jsi in out.series:
            rows.append((p, t, nh2, nv2, ji, jsi))
    _write_csv(Path(rc.out_dir) / "paths.csv",
               ["path", "t", "normH2", "normV2", "j_int", "jstar_int"], rows)

    rep = verify_ito_square(space, graph, noise, scheme(rc), np.zeros(space.n),
                            rc.ensemble_paths, rc.master_seed, rc.threads)
    checks = [("ito_square_identity", rep.passed,
               f"residual={rep.residual:.3e} se={rep.se:.3e} bound={rep.bound:.3e}")]
    if "est1_rhs" in rep.extras:
        lhs, lse = rep.extras["est1_lhs"], rep.extras["est1_lhs_se"]
        rhs = rep.extras["est1_rhs"]
        checks.append(("energy_bound_est1", lhs <= rhs + 3 * lse,
                       f"lhs={lhs:.4f} rhs={rhs:.4f} slack={rhs - lhs:.4f}"))
    return _exit_from(checks), checks


def cmd_invariant(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    noise = build_noise(rc)
    bound = noise.bind(space)
    em = measure.estimate_invariant(space, graph, noise, scheme(rc),
                                    np.zeros(space.n), measure_config(rc),
                                    rc.master_seed, rc.threads)
    report = measure.check_moment_bounds(em, space, bound)
    rows = []
    for name, (est, se) in em.estimates().items():
        rows.append((name, est, se, None, None, None))
    for r in report.rows:
        rows.append((r.name, r.estimate, r.se, r.bound, r.slack, r.passed))
    _write_csv(Path(rc.out_dir) / "invariant_summary.csv",
               ["functional", "estimate", "SE", "bound", "slack", "pass"], rows)
    checks = [(r.name, r.passed,
               f"estimate={r.estimate:.5g} bound={r.bound:.5g} slack={r.slack:.3g}")
              for r in report.rows]
    return _exit_from(checks), checks


def cmd_mixing(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    noise = build_noise(rc)
    ref_cfg = measure.MeasureConfig(
        burn_in=rc.mixing_reference_burn, horizon=rc.mixing_reference_horizon,
        sample_stride=rc.measure_stride, n_batches=rc.measure_batches,
        retain=8)
    em = measure.estimate_invariant(space, graph, noise, scheme(rc),
                                    np.zeros(space.n), ref_cfg,
                                    rc.master_seed, rc.threads)
    x = np.zeros(space.n)
    y = space.mode(1)
    rep = measure.mixing_experiment(space, graph, noise, scheme(rc), x, y,
                                    rc.mixing_pairs, rc.mixing_times,
                                    rc.master_seed, rc.threads, reference=em)
    gap_names = sorted(rep.gaps)
    header = ["t", "coupled_m2", "se", "envelope"] + [f"gap_{n}" for n in gap_names]
    rows = []
    for j, t in enumerate(rep.times):
        rows.append([t, rep.coupled_m2[j], rep.se[j], rep.envelope[j]]
                    + [rep.gaps[n][j] for n in gap_names])
    _write_csv(Path(rc.out_dir) / "mixing.csv", header, rows)
    checks = [
        ("mixing_envelope", rep.envelope_ok,
         f"max m2/envelope = {float(np.max(rep.coupled_m2 / rep.envelope)):.3e}"),
        ("coupling_contraction", rep.contraction_violations == 0,
         f"{rep.contraction_violations} per-step violations"),
        ("mixing_slope", rep.slope <= -0.8, f"log-log slope = {rep.slope:.3f}"),
    ]
    return _exit_from(checks), checks


def cmd_tangent(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    noise = build_noise(rc)
    form = Mollified(rc.drift_lambda, rc.drift_mollify_n, rc.drift_quad_points)
    cfg = scheme(rc, horizon=rc.tangent_horizon, form=form, save_stars=True)
    # the frozen path starts away from the origin so the curvature response
    # sits far above the finite-difference cancellation floor
    x0 = space.mode(1)
    rng = streams.path_stream(rc.master_seed, streams.DOMAIN_PATHS, 0)
    frozen = simulate(space, graph, noise, cfg, x0, rng)
    report = tangent.verify_prop_estimates(space, graph, frozen,
                                           rc.tangent_directions, rc.master_seed)
    rows = [(r.name, r.bound, r.observed, r.passed, r.detail) for r in report.rows]

    prng = streams.path_stream(rc.master_seed, streams.DOMAIN_PROBES, 1)
    h = prng.standard_normal(space.n)
    h /= space.norm_H(h)
    k = prng.standard_normal(space.n)
    k /= space.norm_H(k)
    errs1, _ = tangent.fd_first_variation_errors(
        space, graph, noise, cfg, x0, h, rc.tangent_eps_ladder, rc.master_seed)
    slope1 = tangent.fitted_slope(rc.tangent_eps_ladder, errs1)
    rows.append(("tangent.fd_first_slope", 0.8, slope1, 0.8 <= slope1 <= 1.3,
                 "errors " + ", ".join(f"{e:.3e}" for e in errs1)))
    # low-mode pair: persistent directions keep the second-difference signal
    # above the cancellation floor at the smallest eps
    errs2 = tangent.fd_second_variation_errors(
        space, graph, noise, cfg, x0, space.mode(1), space.mode(2),
        rc.tangent_eps_ladder, rc.master_seed)
    slope2 = tangent.fitted_slope(rc.tangent_eps_ladder, errs2)
    rows.append(("tangent.fd_second_slope", 0.8, slope2, 0.8 <= slope2 <= 1.3,
                 "errors " + ", ".join(f"{e:.3e}" for e in errs2)))

    # the mild/variational comparison is O(dt) for smooth directions, so it
    # probes along the first eigenmode
    h_smooth = space.mode(1)
    diff1 = tangent.crosscheck_variational_mild(space, graph, frozen, h_smooth)
    cfg_half = scheme(rc, horizon=rc.tangent_horizon, dt=rc.time_dt / 2,
                      form=form, save_stars=True)
    rng2 = streams.path_stream(rc.master_seed, streams.DOMAIN_PATHS, 0)
    frozen_half = simulate(space, graph, noise, cfg_half, x0, rng2)
    diff2 = tangent.crosscheck_variational_mild(space, graph, frozen_half, h_smooth)
    ratio = diff1 / diff2 if diff2 > 0 else math.inf
    rows.append(("tangent.mild_crosscheck_halving", 2.0, ratio,
                 1.4 <= ratio <= 2.6,
                 f"sup-diff {diff1:.3e} -> {diff2:.3e} under dt halving"))

    _write_csv(Path(rc.out_dir) / "tangent.csv",
               ["name", "bound", "observed", "pass", "detail"], rows)
    checks = [(r[0], r[3], r[4]) for r in rows]
    return _exit_from(checks), checks


def cmd_kolmogorov(rc: RunConfig):
    space = build_space(rc)
    graph = build_graph(rc)
    noise = build_noise(rc)
    bound = noise.bind(space)
    tf = kolmogorov.TestFunction("cos", (rc.kolmogorov_modes_probe,))
    form = Mollified(rc.drift_lambda, rc.drift_mollify_n, rc.drift_quad_points)
    cfg = scheme(rc, horizon=1.0, dt=rc.kolmogorov_dt, form=form)
    alpha = rc.kolmogorov_alpha

    probe_cfg = measure.MeasureConfig(burn_in=5.0, horizon=30.0,
                                      sample_stride=rc.measure_stride,
                                      retain=max(8, rc.kolmogorov_probes))
    em = measure.estimate_invariant(space, graph, noise, scheme(rc),
                                    np.zeros(space.n), probe_cfg,
                                    rc.master_seed, rc.threads)
    probes = em.retained[:rc.kolmogorov_probes]

    # dt-halving on the first probe pins the discretization constant c
    cal_paths = max(200, rc.kolmogorov_paths // 8)
    cfg_half = scheme(rc, horizon=1.0, dt=rc.kolmogorov_dt / 2, form=form)
    est_a = kolmogorov.full_estimate(space, graph, noise, cfg, tf, probes[0],
                                     alpha, cal_paths, rc.master_seed, rc.threads)
    est_b = kolmogorov.full_estimate(space, graph, noise, cfg_half, tf, probes[0],
                                     alpha, cal_paths, rc.master_seed, rc.threads)
    r_a, se_a = kolmogorov.residual_L0(space, graph, bound, tf, est_a)
    r_b, se_b = kolmogorov.residual_L0(space, graph, bound, tf, est_b)
    c_disc = (1.5 * abs(2.0 * (r_a - r_b)) + 3.0 * math.hypot(se_a, se_b)) \
        / rc.kolmogorov_dt
    eps_extra = kolmogorov.TRUNCATION / alpha

    rows = []
    checks = []
    for i, x in enumerate(probes):
        est = kolmogorov.full_estimate(space, graph, noise, cfg, tf, x, alpha,
                                       rc.kolmogorov_paths, rc.master_seed,
                                       rc.threads)
        resid, se = kolmogorov.residual_L0(space, graph, bound, tf, est)
        tol = 3.0 * se + c_disc * (rc.kolmogorov_dt + eps_extra)
        ok = abs(resid) <= tol
        rows.append((i, alpha, est.lam, est.n, est.v, est.se_v, resid, se))
        checks.append((f"kolmogorov_residual_x{i}", ok,
                       f"|residual|={abs(resid):.3e} tol={tol:.3e}"))
        c1 = kolmogorov.check_c1_bounds(space, tf, est, rc.master_seed)
        checks.append((f"kolmogorov_c1_bound_x{i}",
                       bool(c1["dv_H_ok"] and c1["dv_L1_ok"]),
                       f"||Dv||={c1['dv_H_norm']:.4g} <= {c1['dv_H_bound']:.4g}"))
    _write_csv(Path(rc.out_dir) / "kolmogorov.csv",
               ["x_id", "alpha", "lambda", "n", "v", "se_v", "residual",
                "se_residual"], rows)

    # alpha-ladder contraction proxy: a strong fixed probe and a finer step
    # keep the alpha v -> g signal above the dt + Monte Carlo floor
    x_lad = 0.5 * space.mode(1)
    lad_cfg = scheme(rc, horizon=1.0, dt=min(rc.kolmogorov_dt, 0.005), form=form)
    gx = float(tf.value(space, x_lad)[0])
    lad = []
    for a in (1.0, 4.0, 16.0):
        e = kolmogorov.estimate_v(space, graph, noise, lad_cfg, tf, x_lad, a,
                                  cal_paths, rc.master_seed, rc.threads)
        lad.append(abs(a * e.v - gx))
    checks.append(("kolmogorov_alpha_ladder", lad[0] > lad[1] > lad[2],
                   "alpha v -> g: " + ", ".join(f"{v:.4g}" for v in lad)))

    gap = kolmogorov.drift_replacement_gap(
        space, graph, noise, em, tf, rc.kolmogorov_lambda_grid,
        rc.kolmogorov_n_grid, rc.master_seed, dt=rc.kolmogorov_dt,
        n_paths=rc.kolmogorov_gap_paths, max_samples=rc.kolmogorov_gap_samples,
        threads=rc.threads)
    grows = []
    for i, lam in enumerate(gap.lambdas):
        for j, n in enumerate(gap.ns):
            grows.append((lam, n, gap.gap[i, j], gap.se[i, j]))
    _write_csv(Path(rc.out_dir) / "gap_table.csv",
               ["lambda", "n", "gap", "se"], grows)
    checks.append(("gap_monotone_in_n", gap.monotone_in_n(),
                   "nonincreasing in n at fixed lambda (2 SE)"))
    checks.append(("gap_monotone_in_lambda", gap.monotone_in_lambda_saturated(),
                   "nonincreasing in lambda at saturated n (2 SE)"))
    return _exit_from(checks), checks


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "invariant": cmd_invariant,
    "mixing": cmd_mixing,
    "tangent": cmd_tangent,
    "kolmogorov": cmd_kolmogorov,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="monotone-spde",
        description="Desk-scale laboratory for monotone-drift stochastic "
                    "reaction-diffusion equations")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="dotted key=value file")
        p.add_argument("--seed", type=int, default=12345, help="master seed (u64)")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0: MONOTONE_SPDE_THREADS or auto)")
        p.add_argument("--out", default="out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.monotonic()
    try:
        rc = load_config(args.config)
        rc.master_seed = args.seed & 0xFFFFFFFFFFFFFFFF
        rc.threads = resolve_threads(args.threads)
        rc.out_dir = args.out
        Path(rc.out_dir).mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        code, checks = _COMMANDS[args.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ResolventError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    _write_summary(rc, args.command, checks, time.monotonic() - t0, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
