"""Argument checks shared by the estimators and the CLI."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import SPLIT_NAMES, Dataset
from .errors import ParameterError


def check_dataset(X) -> Dataset:
    """Accept a :class:`Dataset` or a path to its JSON file."""
    if isinstance(X, Dataset):
        return X
    if isinstance(X, (str, Path)):
        return Dataset.load(X)
    raise ParameterError(f"expected a Dataset or a path to one, got {type(X).__name__}")


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_split(ds: Dataset, split: str) -> np.ndarray:
    if split not in SPLIT_NAMES:
        raise ParameterError(f"unknown split {split!r}; expected one of {SPLIT_NAMES}")
    idx = ds.splits[split]
    if len(idx) == 0:
        raise ParameterError(f"split {split!r} is empty")
    return idx
