"""Spectral toolkit for advection-diffusion with form-bounded drifts on the unit torus."""

from .grid import (
    ScalarField,
    TorusGrid,
    VectorField,
    divergence,
    gradient,
    heat_semigroup,
    integrate,
    laplacian,
    lp_norm,
    read_field,
    write_field,
)
from .orlicz import ACOSH2, OrliczNorm, modular, orlicz_norm, phi
from .drift import (
    DriftSpec,
    FormBoundCertificate,
    build_drift,
    form_bound_estimate,
    mollify_drift,
    morrey_norm,
    verify_form_bound,
)
from .solver import SolverConfig, Trajectory, solve, unshift
from .verify import (
    ANALYTIC_TOL,
    SINGULAR_TOL,
    VerificationReport,
    check_cauchy_convergence,
    check_cosh_energy,
    check_exp_energy,
    check_gradient_bound,
    check_lp_contraction,
    check_orlicz_contraction,
    lp_growth_trace,
    lp_threshold,
    refinement_study,
    render_reports,
)

__version__ = "0.1.0"

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VectorField",
    "integrate",
    "gradient",
    "divergence",
    "laplacian",
    "heat_semigroup",
    "lp_norm",
    "write_field",
    "read_field",
    "phi",
    "modular",
    "orlicz_norm",
    "OrliczNorm",
    "ACOSH2",
    "DriftSpec",
    "FormBoundCertificate",
    "build_drift",
    "morrey_norm",
    "mollify_drift",
    "form_bound_estimate",
    "verify_form_bound",
    "SolverConfig",
    "Trajectory",
    "solve",
    "unshift",
    "ANALYTIC_TOL",
    "SINGULAR_TOL",
    "VerificationReport",
    "check_orlicz_contraction",
    "check_lp_contraction",
    "lp_growth_trace",
    "lp_threshold",
    "check_cosh_energy",
    "check_exp_energy",
    "check_gradient_bound",
    "check_cauchy_convergence",
    "refinement_study",
    "render_reports",
    "__version__",
]
