"""acdkit: modeling toolkit for irregularly spaced transaction durations.

Builds duration series from tick data, removes intraday seasonality,
fits autoregressive conditional-duration models by maximum likelihood,
runs residual diagnostics, and tests unconditional distributional
hypotheses with EDF statistics backed by Monte-Carlo critical values.
"""

from .durations import (
    DurationSeries,
    FilterPolicy,
    ThinningConfig,
    TickDay,
    TickRecord,
    aggregate_durations,
    aggregate_transactions,
    apply_filter,
    compute_trade_durations,
    describe,
    price_duration_volatility,
    thin_by_price,
    thin_by_volume,
)
from .errors import AcdkitError
from .estimation import FitOptions, FitResult, bic, default_template, fit_mle, normalize
from .gof import (
    CriticalValueTable,
    EdfStatistics,
    GofReport,
    NullDistribution,
    edf_statistics,
    fit_null,
    gof_test,
    mc_critical_values,
    within_day_share,
)
from .innovations import Innovation
from .model import (
    AcdSpec,
    PsiPath,
    acf1,
    arma_coefficients,
    conditional_intensity,
    filter_psi,
    loglik,
    simulate,
    simulate_durations,
    unconditional_mean,
    unconditional_variance,
)
from .seasonality import (
    DiurnalProfile,
    deseasonalize,
    estimate_fourier_profile,
    estimate_spline_profile,
    reseasonalize,
)

__version__ = "0.1.0"

__all__ = [
    "AcdkitError",
    "AcdSpec",
    "CriticalValueTable",
    "DiurnalProfile",
    "DurationSeries",
    "EdfStatistics",
    "FilterPolicy",
    "FitOptions",
    "FitResult",
    "GofReport",
    "Innovation",
    "NullDistribution",
    "PsiPath",
    "ThinningConfig",
    "TickDay",
    "TickRecord",
    "acf1",
    "aggregate_durations",
    "aggregate_transactions",
    "apply_filter",
    "arma_coefficients",
    "bic",
    "compute_trade_durations",
    "conditional_intensity",
    "default_template",
    "describe",
    "deseasonalize",
    "edf_statistics",
    "estimate_fourier_profile",
    "estimate_spline_profile",
    "filter_psi",
    "fit_mle",
    "fit_null",
    "gof_test",
    "loglik",
    "mc_critical_values",
    "normalize",
    "price_duration_volatility",
    "reseasonalize",
    "simulate",
    "simulate_durations",
    "thin_by_price",
    "thin_by_volume",
    "unconditional_mean",
    "unconditional_variance",
    "within_day_share",
]
