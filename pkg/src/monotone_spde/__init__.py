"""Desk-scale numerical laboratory for monotone-drift stochastic
reaction-diffusion equations on a discretized Gelfand triple."""

__version__ = "0.1.0"
