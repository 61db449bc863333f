"""Log-determinant statistics of random Gram matrices with a variance profile.

Deterministic equivalents, CLT variance and bias of log det(YY* + rho I), their
limits for a continuous variance profile, and Monte Carlo validation.
"""

from .bias import BiasResult, QuadratureConfig, bias_integral, beta_n, p_vector, solve_w
from .detequiv import DeterministicEquivalent, m_n, solve, trace_identity_gap, v_n
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateVarianceError,
    NumericalError,
    ProfileLoadError,
    RmtCltError,
    SingularityError,
    ValidationError,
)
from .fluctuation import (
    EntryDistribution,
    FluctuationReport,
    fluctuation_report,
    kappa_of,
    spectral_radius_certificate,
    theta_sq,
    variance_matrix,
)
from .functions import Sigma2Function, parse_sigma2, polynomial, separable
from .limiting import (
    KernelDiscretization,
    LimitProfile,
    fredholm_det_series,
    kernel_matrix,
    solve_tau,
    theta_sq_limit,
    theta_sq_separable,
)
from .montecarlo import CltDiagnostics, ExperimentConfig, run_experiment
from .profile import (
    ProfileKind,
    VarianceProfile,
    load_profile,
    make_constant,
    make_sampled,
    make_separable,
    profile_from_descriptor,
    save_profile,
)

__version__ = "0.1.0"
