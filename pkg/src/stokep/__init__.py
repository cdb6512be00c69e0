"""stokep: stochastic two-body dynamics toolkit.

Weak-order-2 SDE integration, reproducible parallel Monte Carlo
ensembles, first-integral diagnostics, and the stochastic Gauss equations
for osculating orbital elements.
"""

from .elements import (
    ComparisonReport,
    OrbitalState,
    PerturbationSpec,
    compare_formulations,
    elements_to_polar,
    extract_elements,
    extract_elements_batch,
    gauss_system,
    random_elliptic_states,
    sp_perturbation,
    wrap_angle,
)
from .errors import (
    CollisionError,
    ConfigError,
    EnsembleDegenerateError,
    InconclusiveStudyError,
    IntegrationFailureError,
    InvalidArgumentError,
    NumericDomainError,
    PericenterSingularityError,
    PericenterUndefinedError,
    StokepError,
    UnboundOrbitError,
)
from .integrators import (
    HEUN_ANALOG,
    NUMERICAL_SEARCH,
    Scheme,
    Srk2Coefficients,
    Trajectory,
    euler_maruyama_step,
    integrate,
    reference_solution,
    srk2_step,
)
from .models import (
    CANONICAL_H,
    CANONICAL_PARAMS,
    CANONICAL_STATE,
    CANONICAL_T,
    LangevinParams,
    PolarState,
    TwoBodyParams,
    angular_momentum,
    energy,
    invariant_differentials,
    langevin_mean,
    langevin_second_moment,
    langevin_system,
    momentum_split,
    polar_to_momentum,
    two_body_momentum_system,
    two_body_system,
)
from .montecarlo import (
    ConvergenceStudy,
    EnsembleEstimate,
    FunctionalEstimate,
    Reference,
    integral_functional,
    run_ensemble,
    scheme_mean_trajectory,
    weak_error_study,
)
from .noise import NoiseGrid, SeedSpec, coarsen_grid, derive_stream, generate_grid, grid_for
from .sde import (
    HamiltonianSplit,
    Interpretation,
    SdeSystem,
    StructureCondition,
    StructureReport,
    check_hamiltonian_structure,
    ito_differential,
    stratonovich_to_ito,
    wong_zakai_correction,
)

__version__ = "0.1.0"
