"""Numerical workbench for constant negative scalar-Weyl curvature metrics."""

from .grid import (
    Chart,
    ChartError,
    CovectorField,
    FieldError,
    MetricField,
    ScalarField,
    Sym2Field,
    differentiate,
    divergence_total,
    integrate,
    make_chart,
)
from .tensor import (
    PointMetric,
    Riem4Field,
    kulkarni_nomizu,
    riemann_norm,
    validate_riemann_symmetries,
)
from .curvature import (
    CurvatureBundle,
    christoffel,
    curvature_bundle,
    hessian,
    ricci_scalar,
    riemann,
    weyl,
)
from .conformal import (
    ConformalParams,
    conformal_metric,
    covariance_residual,
    modified_laplacian_apply,
    scalar_weyl,
)
from .deformation import (
    DeformationBundle,
    deform,
    deformation_energy,
    deformed_inverse,
    deformed_norm,
    deformed_scalar_closed_form,
    scalar_divergence_identity,
    weyl_error,
    weyl_error_conformal_residual,
)
from .yamabe import (
    SolveReport,
    TrichotomyResult,
    conformal_energy,
    first_eigenvalue,
    operator_matrix,
    solve_constant_F,
    yhat,
)
from .presets import (
    ball_flat_metric,
    conformally_flat_metric,
    flat_metric,
    fourier_metric,
    fourier_scalar,
)
from .construct import (
    BumpProfile,
    ConstructionConfig,
    ConstructionResult,
    PinchingReport,
    RadialFields,
    RadialSplitReport,
    SearchReport,
    certificate_pair,
    construct_constant_F,
    make_bump,
    phi_functional,
    pinching_report,
    radial_error_components,
    radial_fields,
    search_parameters,
)

__version__ = "0.1.0"
