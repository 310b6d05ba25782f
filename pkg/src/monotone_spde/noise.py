"""Cylindrical Wiener increments through a diagonal Hilbert-Schmidt operator.

B is diagonal in the eigenbasis of A with mode amplitudes b_k = b0 k^{-gamma},
k = 1..modes, truncated at the grid resolution. An increment over dt is

    B dW = sum_k b_k sqrt(dt) g_k e_k,     g_k iid standard normal,

so E||B dW||_H^2 = dt ||B||_HS^2 with ||B||_HS^2 = sum b_k^2 in closed form.
An optional multiplicative mode rescales B by the Lipschitz factor
sigma(||x||_H) = 1 + a tanh(||x||_H).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import TripleSpace


@dataclass(frozen=True)
class NoiseModel:
    b0: float
    gamma: float = 1.0
    modes: int = 0            # 0 resolves to the full grid resolution at bind time
    multiplicative: float = 0.0   # slope a of sigma; 0 = additive

    def __post_init__(self):
        if self.b0 < 0.0:
            raise ValueError("b0 must be nonnegative")
        if not (self.gamma > 0.5):
            raise ValueError("spectral decay gamma must exceed 1/2")
        if self.multiplicative < 0.0:
            raise ValueError("multiplicative slope must be nonnegative")

    @property
    def additive(self) -> bool:
        return self.multiplicative == 0.0

    def bind(self, space: TripleSpace) -> "BoundNoise":
        m = self.modes if self.modes > 0 else space.n
        if m > space.n:
            raise ValueError(f"modes={m} exceeds grid resolution {space.n}")
        return BoundNoise(self, space, m)


class BoundNoise:
    """Noise model attached to a space: concrete amplitudes and mode table."""

    def __init__(self, model: NoiseModel, space: TripleSpace, modes: int):
        self.model = model
        self.space = space
        self.modes = modes
        k = np.arange(1, modes + 1)
        self.b = model.b0 * k ** (-model.gamma)
        self.hs_norm_sq = float(np.sum(self.b ** 2))
        self.emodes = space.emodes[:, :modes]  # (N, modes)
        self.L_B = np.sqrt(self.hs_norm_sq) * (1.0 + model.multiplicative)

    @property
    def additive(self) -> bool:
        return self.model.additive

    def sigma(self, x) -> np.ndarray:
        """State-dependent scalar factor; identically 1 in additive mode."""
        if self.additive:
            return np.ones(np.asarray(x).shape[:-1])
        return 1.0 + self.model.multiplicative * np.tanh(self.space.norm_H(x))

    def hs_norm_sq_at(self, x) -> np.ndarray:
        return self.sigma(x) ** 2 * self.hs_norm_sq

    def transform(self, z: np.ndarray, dt: float) -> np.ndarray:
        """Map standard normals z (..., modes) to the increment field B dW."""
        if z.shape[-1] != self.modes:
            raise ValueError("normal draw has wrong mode count")
        return (z * (self.b * np.sqrt(dt))) @ self.emodes.T

    def sample_increment(self, dt: float, rng: np.random.Generator,
                         x=None) -> np.ndarray:
        """One increment B(x) dW over dt from the given stream."""
        if not (dt > 0.0):
            raise ValueError("dt must be positive")
        incr = self.transform(rng.standard_normal(self.modes), dt)
        if not self.additive:
            if x is None:
                raise ValueError("multiplicative mode needs the current state")
            incr = incr * self.sigma(x)
        return incr

    def coercivity_constants(self) -> tuple[float, float]:
        """(C_eff, C0) with <Ax,x> >= 1/2||B||_HS^2 + C_eff||x||_V^2 - C0.

        With the energy V-norm C_eff = 1 and the smallest constant is
        C0 = ||B||_HS^2 / 2 (the inequality then holds with zero slack).
        """
        if not self.additive:
            raise ValueError("coercivity constants are closed-form only for additive noise")
        return 1.0, 0.5 * self.hs_norm_sq


def validate_noise(bound: BoundNoise, rng: np.random.Generator,
                   trials: int = 64) -> list[tuple[str, bool, str]]:
    """Executable checks for the diffusion assumption (Lipschitz, linear growth)."""
    rows = []
    direct = float(np.sum(bound.b ** 2))
    ok = abs(direct - bound.hs_norm_sq) <= 1e-12 * max(1.0, direct)
    rows.append(("noise.hs_norm_closed_form", ok,
                 f"||B||_HS^2 = {bound.hs_norm_sq:.6g}"))
    x = rng.standard_normal((trials, bound.space.n))
    y = rng.standard_normal((trials, bound.space.n))
    hs_x = np.sqrt(bound.hs_norm_sq_at(x))
    growth = bool(np.all(hs_x <= bound.L_B * (1.0 + bound.space.norm_H(x)) + 1e-12))
    rows.append(("noise.linear_growth", growth,
                 f"||B(x)||_HS <= L_B (1 + ||x||), L_B = {bound.L_B:.4g}"))
    lip_lhs = np.abs(np.sqrt(bound.hs_norm_sq_at(x)) - np.sqrt(bound.hs_norm_sq_at(y)))
    lip = bool(np.all(lip_lhs <= bound.L_B * bound.space.norm_H(x - y) + 1e-12))
    rows.append(("noise.lipschitz", lip, "HS-norm Lipschitz bound sampled"))
    return rows
