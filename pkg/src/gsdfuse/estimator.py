"""scikit-learn style wrapper around the trainer."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .fusion import classify
from .graph import view
from .model import ModelConfig
from .sampling import SamplerConfig
from .trainer import Configs, TrainConfig, full_graph_batch, model_from_checkpoint, predict_logits, prf, train
from .validation import check_forest, check_labels


class GSDFuseDetector(ClassifierMixin, BaseEstimator):
    """Node-level stego detector on a dialogue forest.

    ``X`` is a split :class:`~gsdfuse.graph.DialogueForest` (or a path to
    one); labels come from the forest, so ``y`` is only checked for
    consistency. Predictions cover every node in forest order, computed on the
    full graph; pass ``split`` to restrict them.
    """

    def __init__(self, lr=0.01, weight_decay=0.0, max_epochs=200, patience=20, dropout=None,
                 seed=42, use_gau=True, use_gin=True, use_smote=True, use_triplet=True,
                 node_budget=2000, roots_per_sample=1000, embed_dim=64, max_len=32,
                 dtype="float32", deterministic=False):
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.dropout = dropout
        self.seed = seed
        self.use_gau = use_gau
        self.use_gin = use_gin
        self.use_smote = use_smote
        self.use_triplet = use_triplet
        self.node_budget = node_budget
        self.roots_per_sample = roots_per_sample
        self.embed_dim = embed_dim
        self.max_len = max_len
        self.dtype = dtype
        self.deterministic = deterministic

    def _configs(self) -> Configs:
        return Configs(
            train=TrainConfig(lr=self.lr, weight_decay=self.weight_decay,
                              max_epochs=self.max_epochs, patience=self.patience,
                              dropout=self.dropout, seed=self.seed, use_gau=self.use_gau,
                              use_gin=self.use_gin, use_smote=self.use_smote,
                              use_triplet=self.use_triplet, n_runs=1,
                              deterministic=self.deterministic),
            sampler=SamplerConfig(roots_per_sample=self.roots_per_sample,
                                  node_budget=self.node_budget),
            model=ModelConfig(embed_dim=self.embed_dim, max_len=self.max_len, dtype=self.dtype),
        )

    def fit(self, X, y=None, log_path=None):
        forest = check_forest(X, require_split=True)
        check_labels(forest, y)
        self.checkpoint_, self.report_ = train(forest, self._configs(), log_path)
        self.model_, _ = model_from_checkpoint(self.checkpoint_)
        self.classes_ = np.array([0, 1])
        self.best_epoch_ = self.report_.best_epoch
        return self

    def _logits(self, X) -> torch.Tensor:
        check_is_fitted(self, "model_")
        forest = check_forest(X)
        return predict_logits(self.model_, full_graph_batch(forest, self.model_.cfg.max_len))

    def _restrict(self, X, out, split):
        if split is None:
            return out
        v = view(check_forest(X), split)
        return out[v.index[v.target_mask]]

    def predict(self, X, split=None) -> np.ndarray:
        label, _ = classify(self._logits(X))
        return self._restrict(X, label.numpy(), split)

    def predict_proba(self, X, split=None) -> np.ndarray:
        _, p_stego = classify(self._logits(X))
        p = p_stego.double().numpy()
        return self._restrict(X, np.stack([1.0 - p, p], axis=1), split)

    def score(self, X, y=None, split="test") -> float:
        """F1 with stego as the positive class on ``split`` nodes."""
        forest = check_forest(X, require_split=split not in (None, "all"))
        check_labels(forest, y)
        pred = self.predict(forest, split=split)
        truth = self._restrict(forest, forest.labels, split)
        return prf(truth, pred)["f1"]
