"""Inductive (split) conformal prediction toolkit.

Regression: absolute-residual, normalized-residual (CRF) and conformalized
quantile regression. Classification: naive softmax, class-balanced and
adaptive prediction sets. ``icpkit.diagnostics`` checks trial coverages
against the Beta coverage law.
"""
from ._backend import BACKEND
from .classification import (
    PredictionSet,
    calibrate_aps,
    calibrate_class_balanced,
    calibrate_naive_cls,
    predict_set_aps,
    predict_set_class_balanced,
    predict_set_naive,
    predict_sets,
)
from .dataset import (
    Dataset,
    SplitIndices,
    load_csv,
    make_synthetic_classification,
    make_synthetic_regression,
    save_csv,
    split,
)
from .diagnostics import (
    beta_cdf,
    beta_params,
    empirical_coverage,
    ks_statistic_vs_beta,
    run_trials,
)
from .models import (
    fit_residual_model,
    knn_fit,
    pinball_loss,
    quantile_fit,
    softmax_fit,
    softmax_predict,
)
from .quantile import ConformalQuantile, conformal_quantile, conformal_rank
from .regression import (
    PredictionInterval,
    calibrate_cqr,
    calibrate_crf,
    calibrate_naive,
    predict_interval_cqr,
    predict_interval_crf,
    predict_interval_naive,
    predict_intervals,
)

__version__ = "0.1.0"
