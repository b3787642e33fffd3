"""Certified linear convergence rates of first-order methods via quadratic Lyapunov functions."""
from .assembly import Restriction, SdpProblem, build_rho_sdp
from .core import (
    PRESETS,
    FunctionClass,
    InvalidMethodError,
    MethodSpec,
    custom_method,
    make_preset,
    momentum_parameters,
    validate,
)
from .solver import (
    BackendUnknown,
    ClarabelBackend,
    CvxpyBackend,
    LyapunovCertificate,
    NoCertificateWithinBracket,
    RateCertificate,
    SolverSettings,
    Status,
    bisect,
    bisect_rate,
    solve_feasibility,
    sweep,
)
from .variants import (
    build_els_gd_sdp,
    build_els_hbm_sdp,
    build_restart_sdp,
    els_gd_rate,
    els_hbm_rate,
    momentum_sequence,
    optimize_restart_period,
    restart_rate,
)
from .verify import check_certificate_algebraic, check_decrease_on_trajectory, quadratic_worst_rate

__version__ = "0.1.0"
