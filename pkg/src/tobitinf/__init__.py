"""Two-step Tobit estimators with selection-corrected inference."""

from .bootstrap import BootstrapConfig, BootstrapResult, bootstrap_tobit2
from .errors import DataError, NumericalError, TobitError
from .normal_dist import (
    Phi,
    Phi_inv,
    TruncatedNormalParams,
    inverse_mills,
    phi,
    truncnorm_cdf,
    truncnorm_quantile,
)
from .polyhedral_pivot import (
    InferenceResult,
    PivotContext,
    PolyhedralConstraint,
    invert_interval,
    pivot,
    pivot_context,
    significance_test,
    target_eta,
    truncation_bounds,
)
from .probit import ProbitFit, fit_probit
from .two_step import (
    Tobit1Data,
    Tobit2Data,
    Tobit3Data,
    TwoStepFit,
    aft_data,
    aft_transform,
    fit_tobit1,
    fit_tobit2,
    fit_tobit3,
)

__version__ = "0.1.0"
