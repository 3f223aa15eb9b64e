"""Generalized Skorohod problems on domains with a uniform exterior ball condition."""

from .errors import *  # noqa: F401,F403
from .geometry import (
    Ball,
    Box,
    BoxMinusBall,
    Domain,
    HalfSpace,
    SmoothLevelSet,
    SphericalShell,
    check_drop,
    check_semiconvex_set,
    check_suibc,
    check_uebc,
    distance,
    level_set_catalog,
    normal_unit,
    project,
    suibc_direction,
)
from .paths import BVPath, Path, modulus, mu, mu_inverse, paper_constants, read_path_csv, total_variation, write_path_csv
from .potential import INFINITY, Linear, Quadratic, SemiconvexPotential, Tabulated, Zero, check_subdiff_inequality, eval_phi, subgradient
from .sde import DiffusionField, brownian, monte_carlo, pathwise_stability, simulate
from .skorohod import (
    DriftField,
    SkorohodSolution,
    SolverConfig,
    certify,
    convergence_study,
    read_solution_csv,
    skorohod_map_1d,
    solve,
    solve_with_drift,
    stability_gap,
)

__version__ = "0.1.0"
