"""Discrete Monge-Ampere measures, Aleksandrov solutions and eigenvalue ladders."""

__version__ = "0.1.0"

from .geometry import Ball, Interval, Mesh, Polygon, graded_interval_mesh, grid_mesh, interval_mesh, radial_mesh
from .convex import ConvexFn, DiscreteMeasure, convex_envelope, energy, ma_measure, mixed_ma_measure, mixed_energy
from .measures import INFINITE, MeasureSpec, realize, truncate, weighted_mass
from .dirichlet import DirichletProblem, solve, solve_dirichlet, solve_dirichlet_singular, solve_power
from .eigen import eigen_ladder, inverse_iterate, rayleigh, subeigen_certificate
from .ledger import CheckReport, ConsistencyError, IterationLedger
from .oracles import oracle, sample

__all__ = [
    "Ball", "Interval", "Mesh", "Polygon", "graded_interval_mesh", "grid_mesh", "interval_mesh", "radial_mesh",
    "ConvexFn", "DiscreteMeasure", "convex_envelope", "energy", "ma_measure", "mixed_ma_measure", "mixed_energy",
    "INFINITE", "MeasureSpec", "realize", "truncate", "weighted_mass",
    "DirichletProblem", "solve", "solve_dirichlet", "solve_dirichlet_singular", "solve_power",
    "eigen_ladder", "inverse_iterate", "rayleigh", "subeigen_certificate",
    "CheckReport", "ConsistencyError", "IterationLedger", "oracle", "sample",
]
