"""Centralized MPC benchmark for load-frequency control of multi-area power networks."""

from .closed_loop import LoadEvent, ScenarioSpec, Trajectory, load_at, run_closed_loop, simulate
from .discretization import DiscreteNetworkModel, discretize, matrix_exponential, zoh_global, zoh_per_area
from .metrics import PerformanceReport, eta_index, evaluate, phi_index, tie_line_flow
from .mpc import MPCController, MpcConfig, Setpoint, build_condensed_qp, compute_setpoint, solve_step
from .network import (
    AreaParameters,
    ContinuousNetworkModel,
    NetworkTopology,
    TieLine,
    assemble_continuous,
    build_area_matrices,
    build_coupling_block,
    remove_area,
)
from .qp import Ellipsoid, QPProblem, solve_qp, solve_qp_ellipsoid
from .scenarios import builtin_scenario, parse_scenario_file, serialize_scenario
from .terminal import TerminalDesign, compute_terminal_level, design_terminal, solve_dare, verify_decrease

__version__ = "0.1.0"
