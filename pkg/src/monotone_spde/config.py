"""Run configuration: dotted `key = value` text files, validated up front.

Format: UTF-8 lines `section.key = value`, `#` comments, blank lines ignored.
Unknown keys and malformed values fail before any simulation starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .drift import GraphExact, Mollified, Yosida
from .graphs import MonotoneGraph, graph_from_config
from .integrator import SchemeConfig
from .measure import MeasureConfig
from .noise import NoiseModel
from .space import TripleSpace


class ConfigError(ValueError):
    """Invalid configuration (maps to exit code 2)."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _parse_ints(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(",", " ").split())


@dataclass
class RunConfig:
    # grid
    grid_n: int = 64
    grid_diffusivity: float = 1.0
    # drift
    drift_kind: str = "cubic"
    drift_coeffs: tuple = ()
    drift_lambda: float = 0.1
    drift_mollify_n: int = 8
    drift_quad_points: int = 32
    # noise
    noise_b0: float = 0.5
    noise_gamma: float = 1.0
    noise_modes: int = 0
    noise_multiplicative: float = 0.0
    # time / scheme
    time_dt: float = 1e-3
    time_horizon: float = 1.0
    scheme_mode: str = "lie"
    scheme_drift_form: str = "graph"
    newton_tol: float = 1e-10
    # ensemble / saving
    ensemble_paths: int = 1000
    save_stride: int = 0
    save_paths: int = 1
    # invariant measure
    measure_burn_in: float = 20.0
    measure_horizon: float = 200.0
    measure_stride: int = 10
    measure_batches: int = 16
    measure_retain: int = 64
    measure_chains: int = 1
    # mixing
    mixing_times: tuple = (0.5, 1.0, 2.0, 4.0)
    mixing_pairs: int = 1000
    mixing_reference_burn: float = 5.0
    mixing_reference_horizon: float = 45.0
    # tangent
    tangent_directions: int = 1000
    tangent_eps_ladder: tuple = (1e-2, 1e-3, 1e-4)
    tangent_horizon: float = 0.25
    # kolmogorov
    kolmogorov_alpha: float = 1.0
    kolmogorov_paths: int = 10000
    kolmogorov_dt: float = 0.02
    kolmogorov_probes: int = 5
    kolmogorov_modes_probe: int = 1
    kolmogorov_lambda_grid: tuple = (0.2, 0.1, 0.05)
    kolmogorov_n_grid: tuple = (4, 8, 64)
    kolmogorov_gap_paths: int = 192
    kolmogorov_gap_samples: int = 12
    # validators
    validate_trials: int = 2500
    # runtime (flags, not file keys)
    master_seed: int = 12345
    threads: int = 1
    out_dir: str = "out"

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_KEYS = {
    "grid.n": ("grid_n", int),
    "grid.diffusivity": ("grid_diffusivity", float),
    "drift.kind": ("drift_kind", str),
    "drift.coeffs": ("drift_coeffs", _parse_floats),
    "drift.lambda": ("drift_lambda", float),
    "drift.mollify_n": ("drift_mollify_n", int),
    "drift.quad_points": ("drift_quad_points", int),
    "noise.b0": ("noise_b0", float),
    "noise.gamma": ("noise_gamma", float),
    "noise.modes": ("noise_modes", int),
    "noise.multiplicative": ("noise_multiplicative", float),
    "time.dt": ("time_dt", float),
    "time.horizon": ("time_horizon", float),
    "scheme.mode": ("scheme_mode", str),
    "scheme.drift_form": ("scheme_drift_form", str),
    "scheme.newton_tol": ("newton_tol", float),
    "ensemble.paths": ("ensemble_paths", int),
    "save.stride": ("save_stride", int),
    "save.paths": ("save_paths", int),
    "measure.burn_in": ("measure_burn_in", float),
    "measure.horizon": ("measure_horizon", float),
    "measure.stride": ("measure_stride", int),
    "measure.batches": ("measure_batches", int),
    "measure.retain": ("measure_retain", int),
    "measure.chains": ("measure_chains", int),
    "mixing.times": ("mixing_times", _parse_floats),
    "mixing.pairs": ("mixing_pairs", int),
    "mixing.reference_burn": ("mixing_reference_burn", float),
    "mixing.reference_horizon": ("mixing_reference_horizon", float),
    "tangent.directions": ("tangent_directions", int),
    "tangent.eps_ladder": ("tangent_eps_ladder", _parse_floats),
    "tangent.horizon": ("tangent_horizon", float),
    "kolmogorov.alpha": ("kolmogorov_alpha", float),
    "kolmogorov.paths": ("kolmogorov_paths", int),
    "kolmogorov.dt": ("kolmogorov_dt", float),
    "kolmogorov.probes": ("kolmogorov_probes", int),
    "kolmogorov.modes_probe": ("kolmogorov_modes_probe", int),
    "kolmogorov.lambda_grid": ("kolmogorov_lambda_grid", _parse_floats),
    "kolmogorov.n_grid": ("kolmogorov_n_grid", _parse_ints),
    "kolmogorov.gap_paths": ("kolmogorov_gap_paths", int),
    "kolmogorov.gap_samples": ("kolmogorov_gap_samples", int),
    "validate.trials": ("validate_trials", int),
}


def parse_config_text(text: str) -> RunConfig:
    rc = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        try:
            setattr(rc, attr, conv(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    validate_config(rc)
    return rc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        rc = RunConfig()
        validate_config(rc)
        return rc
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def validate_config(rc: RunConfig) -> None:
    """Cross-field validation against the module preconditions."""
    if rc.grid_n < 1:
        raise ConfigError("grid.n must be >= 1")
    if not rc.grid_diffusivity > 0:
        raise ConfigError("grid.diffusivity must be positive")
    if not rc.time_dt > 0 or rc.time_dt > rc.time_horizon:
        raise ConfigError("need 0 < time.dt <= time.horizon")
    if rc.scheme_mode not in ("lie", "implicit"):
        raise ConfigError(f"unknown scheme.mode {rc.scheme_mode!r}")
    if rc.scheme_drift_form not in ("graph", "yosida", "mollified"):
        raise ConfigError(f"unknown scheme.drift_form {rc.scheme_drift_form!r}")
    if rc.noise_b0 < 0:
        raise ConfigError("noise.b0 must be nonnegative")
    if not rc.noise_gamma > 0.5:
        raise ConfigError("noise.gamma must exceed 1/2")
    if rc.noise_modes < 0 or rc.noise_modes > rc.grid_n:
        raise ConfigError("noise.modes must lie in [0, grid.n]")
    if not rc.drift_lambda > 0 or rc.drift_mollify_n < 1:
        raise ConfigError("drift.lambda > 0 and drift.mollify_n >= 1 required")
    if rc.ensemble_paths < 1 or rc.mixing_pairs < 1 or rc.kolmogorov_paths < 1:
        raise ConfigError("path counts must be positive")
    if not (0 <= rc.measure_burn_in < rc.measure_horizon):
        raise ConfigError("need 0 <= measure.burn_in < measure.horizon")
    if rc.kolmogorov_modes_probe < 1 or rc.kolmogorov_modes_probe > rc.grid_n:
        raise ConfigError("kolmogorov.modes_probe outside the grid")
    try:
        build_graph(rc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# --- builders ---------------------------------------------------------------

def build_space(rc: RunConfig) -> TripleSpace:
    return TripleSpace(rc.grid_n, rc.grid_diffusivity)


def build_graph(rc: RunConfig) -> MonotoneGraph:
    return graph_from_config(rc.drift_kind, rc.drift_coeffs)


def build_noise(rc: RunConfig) -> NoiseModel:
    return NoiseModel(b0=rc.noise_b0, gamma=rc.noise_gamma, modes=rc.noise_modes,
                      multiplicative=rc.noise_multiplicative)


def drift_form(rc: RunConfig):
    if rc.scheme_drift_form == "graph":
        return GraphExact()
    if rc.scheme_drift_form == "yosida":
        return Yosida(rc.drift_lambda)
    return Mollified(rc.drift_lambda, rc.drift_mollify_n, rc.drift_quad_points)


def scheme(rc: RunConfig, horizon: float | None = None, dt: float | None = None,
           form=None, save_stride: int | None = None,
           save_stars: bool = False) -> SchemeConfig:
    return SchemeConfig(
        dt=dt if dt is not None else rc.time_dt,
        horizon=horizon if horizon is not None else rc.time_horizon,
        mode=rc.scheme_mode,
        drift_form=form if form is not None else drift_form(rc),
        newton_tol=rc.newton_tol,
        save_stride=save_stride if save_stride is not None else rc.save_stride,
        save_stars=save_stars,
    )


def measure_config(rc: RunConfig) -> MeasureConfig:
    return MeasureConfig(
        burn_in=rc.measure_burn_in, horizon=rc.measure_horizon,
        sample_stride=rc.measure_stride, n_batches=rc.measure_batches,
        retain=rc.measure_retain, chains=rc.measure_chains,
    )
