"""Periodic homogenization of a two-phase transmission problem with an interfacial flux jump."""
from .cell import EffectiveSource, HomogenizedData, effective_source, homogenize, homogenized_tensor, solve_cell_problems
from .coefficients import CoefficientSet, Expression
from .config import Config, load_config, parse_config
from .errors import ConfigError, ContractError, ConvergenceError, DomainError, PerihomError, ResourceError
from .fem import GridField, SparseSystem, assemble_interface_load, assemble_stiffness, assemble_volume_load
from .geometry import CellGeometry, TiledDomain, interface_facets, phase_indicator, tile
from .harness import interface_limit_test, run_sweep, two_scale_test
from .linalg import SolverOptions, cg_solve, zero_mean_project
from .solvers import compute_flux, corrector_reconstruct, solve_macro, solve_micro

__version__ = "0.1.0"
