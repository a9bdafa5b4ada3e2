"""Simulation and numerical-verification toolkit for the stochastic
higher-spin six-vertex model: vertex weights, forward dynamics, stationary
measures, duality checks, contour-integral transition kernels and the
discrete Hopf-Cole transform."""

__version__ = "0.1.0"

from .params import ModelParams, scaled_params  # noqa: F401
