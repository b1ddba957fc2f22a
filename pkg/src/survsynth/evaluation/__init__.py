from .cox import CoxModel, coxph_fit, partial_log_likelihood
from .fidelity import js_distance, wasserstein_distance
from .report import METRIC_KEYS, EvalReport, MetricError, covariate_fidelity, downstream_scores, fit_cox, km_curves_csv, tstr_evaluate
from .survival import KmCurve, brier_score, c_index, km_fit, km_mse, rmst, rmst_gap

__all__ = [
    "CoxModel",
    "EvalReport",
    "KmCurve",
    "METRIC_KEYS",
    "MetricError",
    "brier_score",
    "c_index",
    "coxph_fit",
    "covariate_fidelity",
    "downstream_scores",
    "fit_cox",
    "js_distance",
    "km_curves_csv",
    "km_fit",
    "km_mse",
    "partial_log_likelihood",
    "rmst",
    "rmst_gap",
    "tstr_evaluate",
    "wasserstein_distance",
]
