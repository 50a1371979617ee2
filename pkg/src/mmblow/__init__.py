"""Numerical laboratory for minimal-mass blow-up of the mass-critical
nonlinear Schrodinger equation with a lower-order double-power term.

Modules
-------
radial           grids, quadrature, derivative operators
nonlin           the two nonlinearities, energies, exponents
groundstate      ground state Q, linearized operators, coercivity
blowup_profile   graded blow-up profile expansion and its residual
law              asymptotic scaling laws and initial-data calibration
evolve           radial Schrodinger time integrator
modulation       decomposition of fields near the profile manifold
experiments      canned verification/sweep experiment driver
cli              command line entry point (mmblow)
"""

from .radial import RadialGrid, RadialFunction, make_grid
from .nonlin import alpha_exponent, energy, mass
from .groundstate import GroundStateData, ground_state
from .blowup_profile import ProfileExpansion, build_expansion
from .law import LawConstants, make_constants, initial_params, time_maps
from .evolve import RunConfig, Trajectory, evolve_field
from .modulation import Decomposer, ModulationTrack, track_trajectory
from .experiments import (ExperimentSpec, RateFitResult, rate_fit,
                          run_experiment)

__all__ = [
    "RadialGrid", "RadialFunction", "make_grid",
    "alpha_exponent", "energy", "mass",
    "GroundStateData", "ground_state",
    "ProfileExpansion", "build_expansion",
    "LawConstants", "make_constants", "initial_params", "time_maps",
    "RunConfig", "Trajectory", "evolve_field",
    "Decomposer", "ModulationTrack", "track_trajectory",
    "ExperimentSpec", "RateFitResult", "rate_fit", "run_experiment",
]

__version__ = "0.1.0"
