"""Hyperparameter tuning of decision-tree learners under nested cross-validation."""

__version__ = "0.1.0"

from .data import Dataset, DataError, balanced_accuracy, confusion_matrix, load_source, stratified_folds
from .space import Configuration, ParamSpace, ParamSpec, builtin_space
from .trees import fit, predict
from .tuners import run_tuner

__all__ = ["__version__", "Dataset", "DataError", "balanced_accuracy", "confusion_matrix", "load_source",
           "stratified_folds", "Configuration", "ParamSpace", "ParamSpec", "builtin_space", "fit", "predict",
           "run_tuner"]
