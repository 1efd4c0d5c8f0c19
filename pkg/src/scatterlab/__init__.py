"""Numerical laboratory for scattering into cones and flux across surfaces.

A split-step Fourier propagator supplies wavefunction frames; Nelson
diffusions (or Bohmian trajectories) are driven by the drift built from
those frames; cone geometry and estimators compare pathwise crossing
statistics with quantum flux and momentum-space oracles.
"""
from .cones import ConeRegion, CrossingEvent, cap_quadrature, classify_segment, lateral_quadrature, region_contains
from .errors import (AliasingError, BoxSizeError, ConfigError, ExtrapolationError, FrameFormatError,
                     ScatterlabError)
from .grid import Grid, ScalarField, VectorField, WaveFunction
from .propagator import (GaussianSpec, Potential, current, density, evolve, free_gaussian_exact, h2_diagnostic,
                         h5_diagnostic, init_gaussian, momentum_density, out_state_density)
from .sde import DriftProvider, PathEnsemble, advance, drift_field, interpolate_drift, sample_initial

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "BoxSizeError", "ConeRegion", "ConfigError", "CrossingEvent", "DriftProvider",
    "ExtrapolationError", "FrameFormatError", "GaussianSpec", "Grid", "PathEnsemble", "Potential",
    "ScalarField", "ScatterlabError", "VectorField", "WaveFunction", "advance", "cap_quadrature",
    "classify_segment", "current", "density", "drift_field", "evolve", "free_gaussian_exact", "h2_diagnostic",
    "h5_diagnostic", "init_gaussian", "interpolate_drift", "lateral_quadrature", "momentum_density",
    "out_state_density", "region_contains", "sample_initial",
]
