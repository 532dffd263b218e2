"""Spectral averaging toolkit for weakly nonlinear Schroedinger and CGL equations on the torus."""
from .action_angle import ActionAngleMap, action_norm, action_sup_norm, actions, angles, lift, rotate, wrap_angle
from .averaging import (
    AverageEstimate,
    averaged_action_field,
    cgl_effective_closed_form,
    cgl_effective_linear,
    effective_field,
    full_average_mc,
    partial_average,
    verify_r3_null,
)
from .dynamics import (
    IntegratorConfig,
    TrajectoryRecord,
    dissipation_check,
    integrate_effective,
    integrate_perturbed,
    residual_xi,
)
from .exceptions import ConfigurationError, DomainError, IntegrationError, NlsAvgError, ShapeError
from .fields import NonlinearitySpec, eval_F, eval_G, eval_P, eval_field_rhs
from .harness import (
    ResonanceReport,
    SimulationConfig,
    StudyFailure,
    TrigPolynomial,
    convergence_study,
    reference_config,
    resonance_scan,
    weyl_average_test,
)
from .spectral import (
    Grid,
    Potential,
    SpectralBasis,
    apply_operator,
    assemble_operator,
    hp_norm,
    mode_inverse,
    mode_transform,
    sobolev_norm,
    weyl_fit,
)

__version__ = "0.1.0"
