"""Free-energy numerics for multi-species Keller-Segel systems with decaying drifts."""

from .criticality import (
    CRITICAL,
    DEGENERATE,
    INADMISSIBLE,
    SUB_CRITICAL,
    CriticalityVerdict,
    InteractionSpec,
    classify,
    critical_scale,
    drift_variance,
    lambda_subset,
    weighted_drift_min,
)
from .dynamics import EvolutionState, EvolveOptions, evolve, selfsim_transform, inverse_selfsim_transform, step
from .energy import EnergyBreakdown, dilation_identity_check, free_energy, inequality_gap
from .errors import (
    BlowUp,
    CFLError,
    ConcentrationOverflow,
    ConvergenceError,
    DomainError,
    KSError,
    SupportOverflowError,
)
from .field import DensityField, Grid2D, dilate, entropy, entropy_bound_check, rearrange_radial, second_moment, translate
from .minimizer import MinimizeOptions, MinimizeReport, gibbs_map, minimize, residual
from .potential import PotentialField, far_field_error, interaction_energy, newtonian_potential
from .radial import RadialProfile, asymptotics_check, mass_balance, solve_radial

__version__ = "0.1.0"
