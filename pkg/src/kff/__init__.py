"""Kirchhoff-type nonlocal diffusion driven by the magnetic fractional Laplacian.

Discretization, potential-well functionals, time evolution and stationary
solutions on a one-dimensional interval.
"""

from kff.grid import Grid, build_grid, exterior_tail
from kff.operator import MagneticForm, MagneticPotential, assemble
from kff.model import ModelParams, validate_hypotheses
from kff.functionals import (
    EnergyReport,
    WellClassification,
    classify,
    energy_J,
    grad_J,
    lambda1,
    mountain_pass_d,
    nehari_I,
    nehari_project,
)
from kff.evolution import Controls, RunSummary, State, evolve, step
from kff.stationary import certify_stationary, solve_ground_state

__all__ = [
    "Grid",
    "build_grid",
    "exterior_tail",
    "MagneticForm",
    "MagneticPotential",
    "assemble",
    "ModelParams",
    "validate_hypotheses",
    "EnergyReport",
    "WellClassification",
    "classify",
    "energy_J",
    "grad_J",
    "lambda1",
    "mountain_pass_d",
    "nehari_I",
    "nehari_project",
    "Controls",
    "RunSummary",
    "State",
    "evolve",
    "step",
    "certify_stationary",
    "solve_ground_state",
]

__version__ = "0.1.0"
