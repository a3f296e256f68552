"""Decision-tree learners sharing one model type."""

from .cart import fit_cart
from .ctree import fit_ctree
from .j48 import fit_j48
from .model import Node, Surrogate, TreeModel

LEARNERS = {"j48": fit_j48, "cart": fit_cart, "ctree": fit_ctree}


def fit(learner: str, data, params=None, rng=None) -> TreeModel:
    """Fit the learner named ``learner`` ('j48', 'cart' or 'ctree')."""
    try:
        fn = LEARNERS[learner]
    except KeyError:
        raise ValueError(f"unknown learner tag {learner!r}") from None
    return fn(data, params, rng)


def predict(model: TreeModel, X):
    return model.predict(X)


def predict_proba(model: TreeModel, X):
    return model.predict_proba(X)


__all__ = ["fit", "fit_cart", "fit_j48", "fit_ctree", "predict", "predict_proba", "TreeModel",
           "Node", "Surrogate", "LEARNERS"]
