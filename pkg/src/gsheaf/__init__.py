"""Gaussian cellular sheaves on graphs and Gaussian sheaf neural networks."""
from .data import Dataset, load_weather, synthesize
from .errors import (DegeneracyError, FactorizationError, GSheafError, NumericError, ParameterError, PathError,
                     SchemaError, ShapeError, SingularityError)
from .gaussian import Gaussian, GaussianField
from .graph import Graph, Orientation
from .models import MODEL_NAMES, GSNNRegressor, make_model
from .sheaf import RestrictionMapSet, SheafOperators, assemble

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_weather", "synthesize", "Gaussian", "GaussianField", "Graph", "Orientation",
    "RestrictionMapSet", "SheafOperators", "assemble", "GSNNRegressor", "MODEL_NAMES", "make_model",
    "GSheafError", "ParameterError", "ShapeError", "SingularityError", "DegeneracyError", "PathError",
    "NumericError", "FactorizationError", "SchemaError",
]
