"""Bivariate Gaussian random field extremes.

Matern cross-covariance models, Pickands-constant Monte Carlo, closed-form
joint excursion tail asymptotics, and brute-force verification tooling.
"""

from .asymptotics import (
    AsymptoticResult,
    CellBudgetError,
    RiemannCheck,
    default_delta_constant,
    delta_lower_bound,
    matern_theorem1,
    matern_theorem2,
    psi,
    riemann_sum_check,
    theorem1_value,
    theorem2_value,
)
from .fields import (
    DomainPair,
    FieldSample,
    GridSpec,
    NotPositiveDefiniteError,
    Rect,
    build_covariance,
    cholesky_factor,
    cholesky_sample,
    read_sample_dump,
    sample_fbm,
    write_sample_dump,
)
from .model import (
    AssumptionReport,
    BivariateMaternModel,
    LocalExpansion,
    UnsupportedModelError,
    check_assumptions,
    cross_corr,
    expansion_coefficient,
    local_expansion,
    validity_bound,
    validity_bound_equal_scale,
)
from .montecarlo import (
    ExcursionEstimate,
    RateFit,
    field_maxima,
    mc_excursion,
    mc_excursion_multi,
    rate_fit,
)
from .pickands import (
    PickandsEstimate,
    estimate_H_constant,
    estimate_H_joint,
    estimate_H_set,
    path_suprema,
)
from .specfun import (
    MaternParams,
    QuadratureError,
    bessel_k,
    gamma_fn,
    matern,
    matern_cosine_integral,
    matern_d2_at_zero,
)

__version__ = "0.1.0"
