"""Path-integral Monte Carlo for the Nelson model and the Fröhlich polaron."""
from .params import (
    EstimatorError,
    KernelDivergenceError,
    KernelDomainError,
    ModelParams,
    NelsonMCError,
    ProfileError,
    QuadratureConfig,
    QuadratureError,
    TableSpec,
    TableValidationError,
    WeightOverflowError,
)
from .kernels import (
    counterterm,
    gamma_lower_bound,
    pair_potential_W,
    polaron_W,
    propagator_beta,
    rho_diag,
    rho_kernel,
    rho_radial_derivative,
)
from .tables import KernelTable, LagGrid, LogGrid, build_kernel_table
from .paths import BrownianPath, TimeGrid, sample_path
from .mc import MCEstimate
from .estimators import (
    RenormalizedAction,
    RunOptions,
    action_direct,
    action_renormalized,
    coherent_expectation,
    coherent_xi,
    diamagnetic_check,
    energy,
    gamma_overlap,
    gaussian_profile,
    vacuum_expectation,
)
from .polaron import PolaronRun, kato_moment_stress, polaron_action, polaron_vacuum

__version__ = "0.1.0"
