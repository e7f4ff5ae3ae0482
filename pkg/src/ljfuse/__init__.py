"""Distributed outer Loewner-John ellipsoids via exact dynamic consensus and projected gradient flow."""

__version__ = "0.1.0"

from .cost import CostKind, cost_value, gradient, q_of_x
from .edc import ConsensusChannel, phi
from .ellipsoid import Ellipsoid, contains_intersection_sampled, spectral_bounds
from .errors import LJFuseError
from .fusion import FusionResult, fuse_central, fuse_distributed
from .graph import Network, default_six_node, make_complete, make_cycle, make_path
from .oracle import grid_search, residual_kkt, solve_simplex
from .pgf import ControllerParams, projected_gradient, velocity_bound
from .simulator import (
    ProblemInstance,
    SimConfig,
    SimulationTrace,
    compare_to_ideal,
    generate_instance,
    generate_well_conditioned,
    run,
)
from .tuning import ProtocolParams, tune, validate

__all__ = [
    "ConsensusChannel",
    "ControllerParams",
    "CostKind",
    "Ellipsoid",
    "FusionResult",
    "LJFuseError",
    "Network",
    "ProblemInstance",
    "ProtocolParams",
    "SimConfig",
    "SimulationTrace",
    "compare_to_ideal",
    "contains_intersection_sampled",
    "cost_value",
    "default_six_node",
    "fuse_central",
    "fuse_distributed",
    "generate_instance",
    "generate_well_conditioned",
    "gradient",
    "grid_search",
    "make_complete",
    "make_cycle",
    "make_path",
    "phi",
    "projected_gradient",
    "q_of_x",
    "residual_kkt",
    "run",
    "solve_simplex",
    "spectral_bounds",
    "tune",
    "validate",
    "velocity_bound",
]
