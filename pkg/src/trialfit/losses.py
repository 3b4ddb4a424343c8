"""Criteria: ``fn(y_pred, y_true) -> scalar tensor``."""
from . import autodiff as ad
from .errors import ShapeError

BCE_EPS = 1e-7


def _pair(name, y_pred, y_true):
    y_pred, y_true = ad.tensor(y_pred), ad.tensor(y_true)
    if y_pred.shape != y_true.shape:
        raise ShapeError(f"{name}: prediction shape {y_pred.shape} does not match target shape {y_true.shape}")
    return y_pred, y_true


def mse(y_pred, y_true):
    y_pred, y_true = _pair("mse", y_pred, y_true)
    diff = y_pred - y_true
    return (diff * diff).mean()


def binary_cross_entropy(y_pred, y_true, eps: float = BCE_EPS):
    """Mean BCE on probabilities clamped to ``[eps, 1 - eps]``, so each term is at most ~16.1."""
    y_pred, y_true = _pair("binary_cross_entropy", y_pred, y_true)
    p = y_pred.clip(eps, 1.0 - eps)
    return -(y_true * p.log() + (1.0 - y_true) * (1.0 - p).log()).mean()


def hinge(y_pred, y_true):
    """Mean of ``max(0, 1 - y * f(x))`` for labels in {-1, +1}."""
    y_pred, y_true = _pair("hinge", y_pred, y_true)
    return (1.0 - y_true * y_pred).relu().mean()
