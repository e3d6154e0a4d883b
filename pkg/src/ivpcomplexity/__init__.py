"""Lower-bound constructions and scaling experiments for the information complexity of ODE initial value problems.

Submodules:

- ``bump``: the mollifier h, its derivatives, and bumps on parallelepipeds
- ``geometry``: problem specification, base-face subdivision, cell lookup
- ``plateau``: cutoff fields constant on an inner box
- ``information``: standard and linear nonadaptive information
- ``fooling``: pairs f1, f2 with identical information
- ``solvers``: reference integration, grid and Taylor solvers
- ``harness``: sweeps, exponent fits, audits
"""
from .bump import Parallelepiped, ParallelepipedBump, certify_amplitude, eval_h, eval_h_deriv, integral_h
from .fooling import (ConstructionError, FoolingPair, build_d1, build_pair, build_thm1, build_thm2i,
                      build_thm2ii, predicted_separation, verify_zero_information)
from .geometry import BaseSubdivision, CellGrid, IntervalTrain, ProblemSpec
from .harness import ExperimentConfig, ScalingRun, audit_inequalities, fit_exponent, run_sweep
from .information import InfoOperator, LinearFunctional, StandardAtom, evaluate_info
from .plateau import PlateauField
from .solvers import (Trajectory, reference_solve, solve_adaptive_taylor, solve_nonadaptive_grid,
                      sup_distance)

__version__ = "0.1.0"
