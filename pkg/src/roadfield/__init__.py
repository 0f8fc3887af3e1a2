"""Finite-difference eigenvalues and dynamics for a road-field reaction-diffusion model."""

from .errors import (
    ConfigError,
    ConvergenceError,
    GeometryError,
    NoSubsolutionError,
    ParameterDomainError,
    RoadfieldError,
    StabilityError,
)
from .model import ModelParams, ReactionSpec, linearization, validate_hypotheses
from .grids import Geometry, DiscreteOperator, apply, assemble_coupled_operator, assemble_field_operator
from .eigen import (
    EigenResult,
    TruncationSweep,
    dense_oracle,
    periodic_cell_eigen,
    periodic_roadfield_eigen,
    principal_eigenpair,
    rayleigh_quotient,
    strip_eigen,
    truncation_sweep,
)

__version__ = "0.1.0"
