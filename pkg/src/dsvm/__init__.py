"""Multi-task linear SVM training with a shared nonnegative covariance dictionary."""

from .model_core import (
    EPS_DELTA,
    DictionaryModel,
    Hyperparameters,
    TaskDataset,
    TaskParameters,
    TrainState,
    assemble_covariance,
    evaluate_objective,
    load_model,
    recover_weights,
    reweight_features,
    save_model,
)
from .svm_solver import SvmSolution, predict, predict_labels, train_linear_svm, train_reweighted
from .lasso_solver import LassoProblem, LassoResult, build_mean_reg_system, solve_lasso
from .dict_learner import (
    CubicUpdateInputs,
    project_capped_simplex,
    update_delta,
    update_dictionary,
)
from .trainer import (
    MulticlassModel,
    TrainConfig,
    TrainingError,
    fit,
    fit_exemplar,
    fit_one_vs_rest,
    predict_one_vs_rest,
)

__version__ = "0.1.0"

__all__ = [
    "EPS_DELTA",
    "DictionaryModel",
    "Hyperparameters",
    "TaskDataset",
    "TaskParameters",
    "TrainState",
    "assemble_covariance",
    "evaluate_objective",
    "load_model",
    "recover_weights",
    "reweight_features",
    "save_model",
    "SvmSolution",
    "predict",
    "predict_labels",
    "train_linear_svm",
    "train_reweighted",
    "LassoProblem",
    "LassoResult",
    "build_mean_reg_system",
    "solve_lasso",
    "CubicUpdateInputs",
    "project_capped_simplex",
    "update_delta",
    "update_dictionary",
    "MulticlassModel",
    "TrainConfig",
    "TrainingError",
    "fit",
    "fit_exemplar",
    "fit_one_vs_rest",
    "predict_one_vs_rest",
]
