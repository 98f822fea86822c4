"""Identification and estimation with a misclassified, endogenous binary
regressor and a binary instrument."""

__version__ = "0.1.0"

from .core_types import (  # noqa: F401
    DegenerateCellError,
    IdentificationError,
    InconsistentMomentsError,
    InfeasibleSystemError,
    InputError,
    InvariantBreach,
    MisclassError,
    MomentSet,
    NoFirstStageError,
    Observation,
    Sample,
    SpecError,
    StructuralParams,
    ThetaVector,
    validate_sample,
)
from .moments import empirical_law, empirical_moments, population_law, population_moments  # noqa: F401
from .partial_id import beta_interval_first_order, feasible_at, sharp_set_grid  # noqa: F401
from .point_id import one_sided_point_estimate, solve_theta, theta_to_structural  # noqa: F401
from .gmm import estimate_cell  # noqa: F401
