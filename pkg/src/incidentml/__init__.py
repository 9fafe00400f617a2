"""Entity-level cyber-incident occurrence and frequency modeling toolkit."""

__version__ = "0.1.0"

from .data import (
    DEFAULT_LABELS,
    CountMatrix,
    FeatureMatrix,
    FoldPlan,
    LabelMatrix,
    LabelSet,
    SplitIndex,
    derive_labels,
    make_folds,
    make_split,
)
from .trees import Hyperparams
from .chains import (
    ChainModel,
    SearchSpace,
    fit_br,
    fit_cc,
    fit_mct,
    fit_mor,
    fit_mrt,
    fit_rc,
    predict_labels,
    predict_regression,
    predict_scores,
)
from .metrics import classification_report, regression_report

__all__ = [
    "DEFAULT_LABELS",
    "ChainModel",
    "CountMatrix",
    "FeatureMatrix",
    "FoldPlan",
    "Hyperparams",
    "LabelMatrix",
    "LabelSet",
    "SearchSpace",
    "SplitIndex",
    "classification_report",
    "derive_labels",
    "fit_br",
    "fit_cc",
    "fit_mct",
    "fit_mor",
    "fit_mrt",
    "fit_rc",
    "make_folds",
    "make_split",
    "predict_labels",
    "predict_regression",
    "predict_scores",
    "regression_report",
]
