"""Equivariant local index computations: graded algebra, Volterra symbols,
Mehler kernels, fixed-point formulas, cocycles and spectral models."""
from .scalars import get_precision, precision, set_precision
from .graded_algebra import (
    DimensionError,
    ExteriorElement,
    FormMatrix,
    UnsupportedDimensionError,
    berezin_horizontal,
    berezin_top,
    clifford_convention,
    clifford_product,
    phi_spinor_symbol,
    supertrace_sigma,
    wedge,
)
from .char_forms import (
    NormalAction,
    SingularNormalError,
    TwistData,
    a_hat,
    ch_phi,
    det_sqrt_one_minus,
    nu_phi,
)
from .volterra import (
    GaussianKernel,
    GetzlerOperator,
    InsufficientLayersError,
    VolterraSymbol,
    asymptotic_coefficients,
    fiber_integral_IQ,
    getzler_order_and_model,
    heat_parametrix,
    symbol_compose,
    symbol_to_kernel,
)
from .mehler import (
    ModelCurvature,
    gamma_phi_density,
    mehler_fiber_integral,
    mehler_kernel,
    mehler_kernel_real,
    resolvent_power_fiber_integral,
)
from .equivariant_index import (
    FixedPointStratum,
    GroupWord,
    StratumNode,
    cm_cocycle,
    cm_constants,
    equivariant_index,
    gamma_phi_volterra,
    jlo_limit,
)
from .spectral_models import (
    SpectralModel,
    build_sphere_model,
    build_torus_model,
    fit_asymptotic_orders,
    heat_supertrace,
    jlo_numeric,
)

__version__ = "0.1.0"
