"""Shape-constrained nonparametric instrumental-variable estimation.

Series NPIV estimators with and without a monotonicity constraint, measures
of ill-posedness, a bootstrap test of the monotone-instrument condition and
a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .basis import (  # noqa: E402
    BSplineFeatures,
    Kernel,
    SplineBasis,
    derivative_matrix,
    design_matrix,
    eval_basis,
    eval_deriv,
    gram_matrix,
    kernel_weight,
    make_basis,
)
from .dgp import (  # noqa: E402
    SIM_DEGREES,
    DgpSpec,
    Family,
    McConfig,
    McReport,
    cond_cdf_oracle,
    mc_study,
    simulate,
    table_cells,
    true_g,
)
from .exceptions import InvariantError, NumericalError  # noqa: E402
from .montest import (  # noqa: E402
    MivTestConfig,
    MivTestResult,
    MonotoneIVTest,
    bootstrap_critical_value,
    dominance_weights,
    estimate_cond_cdf,
    monotone_iv_test,
    slope_sign_test,
    test_statistic,
)
from .npiv import (  # noqa: E402
    NpivConfig,
    NpivFit,
    NPIVRegressor,
    Sample,
    fit_constrained,
    fit_unconstrained,
    identification_constant,
    predict,
    restricted_tau_hat,
    sieve_tau_hat,
)
from .solver import Qp, QpSolution, QpStatus, kkt_residual, solve_qp  # noqa: E402

__all__ = [
    "BSplineFeatures", "Kernel", "SplineBasis", "derivative_matrix", "design_matrix",
    "eval_basis", "eval_deriv", "gram_matrix", "kernel_weight", "make_basis",
    "SIM_DEGREES", "DgpSpec", "Family", "McConfig", "McReport", "cond_cdf_oracle",
    "mc_study", "simulate", "table_cells", "true_g",
    "InvariantError", "NumericalError",
    "MivTestConfig", "MivTestResult", "MonotoneIVTest", "bootstrap_critical_value",
    "dominance_weights", "estimate_cond_cdf", "monotone_iv_test", "slope_sign_test",
    "test_statistic",
    "NpivConfig", "NpivFit", "NPIVRegressor", "Sample", "fit_constrained",
    "fit_unconstrained", "identification_constant", "predict", "restricted_tau_hat",
    "sieve_tau_hat",
    "Qp", "QpSolution", "QpStatus", "kkt_residual", "solve_qp",
]
