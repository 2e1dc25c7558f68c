"""Power-law decay Poisson models for event-centred count series."""

from .core import (Ar2Params, DecayPoisError, EventSeries, IndepParams, UnifiedParams,
                   Window, relative_window_slice, validate_series)
from .inference import (AsymmetricFit, FitOptions, FitResult, fit_ar1, fit_ar2,
                        fit_asymmetric, fit_independence, fit_unified, loglik_ar2,
                        loglik_independence, loglik_unified, poisson_log_pmf,
                        score_independence)
from .models import (DEFAULT_FLOOR, MeanCurve, ar1_first_step_mean, ar2_conditional_mean,
                     ar_decay_factor, fitted_curve_independence, power_decay_mean,
                     unified_conditional_mean)
from .selection import ModelComparison, aic, compare_models
from .simulator import (SimConfig, simulate, simulate_ar, simulate_independence,
                        simulate_unified)
from .uncertainty import (ConfidenceIntervals, FisherMatrix, confidence_intervals,
                          fisher_ar1, fisher_independence,
                          fisher_series_divergence_report)

__version__ = "0.1.0"
