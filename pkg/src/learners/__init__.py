"""
Survival machine learning: SVMs, trees and ensembles, boosting, feed-forward networks.

File: hdsurv/src/learners/__init__.py
"""
from src.learners.boosting import BoostFit, boost_fit, predict_boost
from src.learners.forest import (
    Forest,
    bagging_fit,
    forest_chf,
    forest_curves,
    forest_survival,
    mortality,
    oob_concordance,
    rsf_fit,
)
from src.learners.mlp import (
    Activation,
    CoxNetOptions,
    Network,
    backward,
    forward,
    predict,
    train_cox_net,
)
from src.learners.svm import (
    KernelSpec,
    SvmMode,
    SvmModel,
    fit_hybrid_svm,
    fit_rank_svm,
    fit_regression_svm,
)
from src.learners.trees import SplitCriterion, SurvivalTree, TreeOptions, grow_tree, predict_tree

__all__ = [
    "Activation",
    "BoostFit",
    "CoxNetOptions",
    "Forest",
    "KernelSpec",
    "Network",
    "SplitCriterion",
    "SurvivalTree",
    "SvmMode",
    "SvmModel",
    "TreeOptions",
    "backward",
    "bagging_fit",
    "boost_fit",
    "fit_hybrid_svm",
    "fit_rank_svm",
    "fit_regression_svm",
    "forest_chf",
    "forest_curves",
    "forest_survival",
    "forward",
    "grow_tree",
    "mortality",
    "oob_concordance",
    "predict",
    "predict_boost",
    "predict_tree",
    "rsf_fit",
    "train_cox_net",
]
