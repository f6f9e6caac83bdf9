"""GSNN and baseline estimators."""
from __future__ import annotations

from ..errors import ParameterError
from .base import EvalResult, GraphRegressor, make_batch, w2_values
from .baselines import GaussianGCNRegressor, GCNRegressor, MLPRegressor, NSDRegressor
from .gsnn import GSNNModule, GSNNRegressor

_KIND = {"diag": "diagonal", "orth": "orthogonal", "gen": "general"}

MODEL_NAMES = ("mlp", "gcn", "gaussian_gcn", "nsd_diag", "nsd_orth", "nsd_gen",
               "gsnn_diag", "gsnn_orth", "gsnn_gen", "gsnn_graphlap")


def make_model(name: str, **params) -> GraphRegressor:
    """Estimator for a CLI model name (``gsnn_orth``, ``gcn``, ...) with the given hyperparameters."""
    if name == "mlp":
        return MLPRegressor(**params)
    if name == "gcn":
        return GCNRegressor(**params)
    if name == "gaussian_gcn":
        return GaussianGCNRegressor(**params)
    if name == "nsd":
        return NSDRegressor(**params)
    if name == "gsnn":
        return GSNNRegressor(**params)
    head, _, tail = name.partition("_")
    if head == "nsd" and tail in _KIND:
        return NSDRegressor(map_kind=_KIND[tail], **params)
    if head == "gsnn" and tail in _KIND:
        return GSNNRegressor(map_kind=_KIND[tail], variant="sheaf", **params)
    if name == "gsnn_graphlap":
        return GSNNRegressor(variant="graphlap", **params)
    raise ParameterError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")


__all__ = [
    "EvalResult", "GraphRegressor", "GSNNModule", "GSNNRegressor", "MLPRegressor", "GCNRegressor",
    "GaussianGCNRegressor", "NSDRegressor", "MODEL_NAMES", "make_model", "make_batch", "w2_values",
]
