"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .graph import DialogueForest, load_forest


def check_forest(X, require_split: bool = False) -> DialogueForest:
    """Accept a forest or a path to one; optionally insist on split labels."""
    if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__"):
        X = load_forest(X)
    if not isinstance(X, DialogueForest):
        raise TypeError(f"expected a DialogueForest or a JSONL path, got {type(X).__name__}")
    if require_split and not X.is_split:
        raise ConfigError("the forest has no train/val/test assignment; run split_forest first")
    return X


def check_labels(forest: DialogueForest, y) -> None:
    """``y`` is optional; when given it must equal the labels stored in the forest."""
    if y is None:
        return
    y = np.asarray(y)
    if y.shape != (forest.n_nodes,):
        raise ValueError(f"y has shape {y.shape}, expected ({forest.n_nodes},)")
    if not np.array_equal(y, forest.labels):
        raise ValueError("y disagrees with the labels stored in the forest")
