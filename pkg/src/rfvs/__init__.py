"""Random forests with OOB-driven variable selection and a benchmark harness."""

__version__ = "0.1.0"

from .data import CLASSIFICATION, REGRESSION, Dataset, Split, load_csv, \
    stratified_folds
from .synth import FriedmanConfig, ReplicateSpec, ToysConfig, add_replicates, \
    gen_friedman1, gen_friedman23, gen_toys
from .cart import Tree, TreeConfig, best_split, fit_1d_curve_tree, grow_tree, \
    predict_tree
from .forest import Forest, ForestConfig, ImportanceReport, fit_forest, \
    importance_report, oob_error_mean, permutation_importance, predict_forest
from .select import SelectionConfig, SelectionResult, eliminate_and_rank, \
    interpretation_step, prediction_step, select_variables

__all__ = [
    "CLASSIFICATION", "REGRESSION", "Dataset", "Split", "load_csv",
    "stratified_folds", "FriedmanConfig", "ReplicateSpec", "ToysConfig",
    "add_replicates", "gen_friedman1", "gen_friedman23", "gen_toys", "Tree",
    "TreeConfig", "best_split", "fit_1d_curve_tree", "grow_tree",
    "predict_tree", "Forest", "ForestConfig", "ImportanceReport",
    "fit_forest", "importance_report", "oob_error_mean",
    "permutation_importance", "predict_forest", "SelectionConfig",
    "SelectionResult", "eliminate_and_rank", "interpretation_step",
    "prediction_step", "select_variables",
]
