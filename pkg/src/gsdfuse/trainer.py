"""Sampled-subgraph training with early stopping, and full-graph evaluation."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.metrics import precision_recall_fscore_support

from .checkpoint import Checkpoint, fingerprint
from .exceptions import ConfigError, NumericError
from .fusion import classify
from .graph import DialogueForest, view
from .model import GraphBatch, GSDFuseNet, ModelConfig
from .objectives import (SmoteConfig, TripletConfig, composite_loss, mine_triplets,
                         smote_plan, smote_interpolate, subsample_per_class, triplet_loss)
from .sampling import Adjacency, SamplerConfig, estimate_norms, sample_subgraph

log = logging.getLogger(__name__)

DETERMINISTIC_ENV = "GSDFUSE_DETERMINISTIC"
LOG_COLUMNS = ("epoch", "L_CE", "L_SMOTE", "L_triplet", "L_total",
               "val_P", "val_R", "val_F1", "seconds")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.0
    max_epochs: int = 200
    patience: int = 20
    dropout: float | None = None  # overrides GNN and GAU dropout when set
    seed: int = 42
    use_gau: bool = True
    use_gin: bool = True
    use_smote: bool = True
    use_triplet: bool = True
    n_runs: int = 3
    deterministic: bool = False

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 0 < self.patience < self.max_epochs:
            raise ConfigError("patience must satisfy 0 < patience < max_epochs")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")

    @property
    def ablation(self) -> dict:
        return {"gau": self.use_gau, "gin": self.use_gin,
                "smote": self.use_smote, "triplet": self.use_triplet}


@dataclass
class Configs:
    """Every knob of one training run."""

    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    triplet: TripletConfig = field(default_factory=TripletConfig)

    def to_dict(self) -> dict:
        return {k: asdict(getattr(self, k)) for k in ("train", "sampler", "model", "smote", "triplet")}

    @classmethod
    def from_dict(cls, d: dict) -> "Configs":
        d = d or {}
        unknown = set(d) - {"train", "sampler", "model", "smote", "triplet"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        try:
            return cls(
                train=TrainConfig(**d.get("train", {})),
                sampler=SamplerConfig(**d.get("sampler", {})),
                model=ModelConfig(**d.get("model", {})),
                smote=SmoteConfig(**d.get("smote", {})),
                triplet=TripletConfig(**d.get("triplet", {})),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_train(self, **changes) -> "Configs":
        return replace(self, train=replace(self.train, **changes))

    def effective_model(self) -> ModelConfig:
        m = self.model
        if self.train.dropout is not None:
            m = replace(m, gnn_dropout=self.train.dropout,
                        gau=replace(m.gau, dropout=self.train.dropout))
        return m

    def fingerprint(self, dataset_fingerprint: str) -> str:
        d = self.to_dict()
        d["dataset"] = dataset_fingerprint
        return fingerprint(d)


@dataclass
class TrainReport:
    history: list[dict]
    best_epoch: int
    best_val_f1: float
    epochs_run: int
    smote_skipped: int = 0
    seconds: float = 0.0

    @property
    def first_epoch_loss(self) -> float:
        return self.history[0]["L_total"]


def deterministic_requested(cfg: TrainConfig | None = None) -> bool:
    env = os.environ.get(DETERMINISTIC_ENV, "").strip().lower()
    return (cfg is not None and cfg.deterministic) or env in ("1", "true", "yes", "on")


def seed_everything(seed: int, deterministic: bool = False):
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))
    if deterministic:
        torch.use_deterministic_algorithms(True)


def build_model(vocab_size: int, cfgs: Configs) -> GSDFuseNet:
    return GSDFuseNet(vocab_size, cfgs.effective_model(),
                      use_gin=cfgs.train.use_gin, use_gau=cfgs.train.use_gau)


def prf(y_true, y_pred) -> dict:
    """Precision, recall and F1 with stego (1) as positive; all 0 when undefined."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    p, r, f, _ = precision_recall_fscore_support(
        y_true, y_pred, average="binary", pos_label=1, zero_division=0)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return {"precision": float(p), "recall": float(r), "f1": float(f),
            "tp": tp, "fp": fp, "fn": fn, "n": int(len(y_true))}


def full_graph_batch(forest: DialogueForest, max_len: int) -> GraphBatch:
    return GraphBatch.build(forest.token_matrix(max_len), forest.edges)


@torch.no_grad()
def predict_logits(model: GSDFuseNet, batch: GraphBatch) -> torch.Tensor:
    was_training = model.training
    model.eval()
    try:
        return model(batch)["logits"]
    finally:
        model.train(was_training)


def _dump_batch(tokens, labels, losses) -> str:
    fd, path = tempfile.mkstemp(prefix="gsdfuse-nonfinite-", suffix=".npz")
    os.close(fd)
    np.savez(path, tokens=tokens, labels=labels, **{k: np.asarray(float(torch.as_tensor(v).detach())) for k, v in losses.items()})
    return path


class Trainer:
    """One training run. ``fit`` returns the best checkpoint by validation F1."""

    def __init__(self, forest: DialogueForest, cfgs: Configs | None = None,
                 log_path: str | os.PathLike | None = None):
        if not forest.is_split:
            raise ConfigError("the forest must be split before training")
        self.forest = forest
        self.cfgs = cfgs or Configs()
        self.log_path = Path(log_path) if log_path else None
        self.dataset_fingerprint = forest.fingerprint()

    def fit(self) -> tuple[Checkpoint, TrainReport]:
        cfgs = self.cfgs
        tc = cfgs.train
        forest = self.forest
        deterministic = deterministic_requested(tc)
        seed_everything(tc.seed, deterministic)
        rng = np.random.default_rng(tc.seed)
        model = build_model(forest.vocab_size, cfgs)
        dtype = model.cfg.torch_dtype
        opt = torch.optim.Adam(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)

        max_len = model.cfg.max_len
        tokens_all = forest.token_matrix(max_len)
        labels_all = forest.labels
        train_view = view(forest, "train")
        adj = Adjacency.from_view(train_view)
        train_tokens = tokens_all[train_view.index]
        train_labels = labels_all[train_view.index]
        minority = 1
        if np.sum(train_labels == 1) > np.sum(train_labels == 0):
            warnings.warn("stego is the majority class in the training split; "
                          "SMOTE will oversample cover instead", RuntimeWarning)
            minority = 0
        norms = estimate_norms(adj, cfgs.sampler, rng)
        n_sub = max(1, math.ceil(train_view.n_nodes / cfgs.sampler.node_budget))

        val_view = view(forest, "val")
        eval_batch = full_graph_batch(forest, max_len)
        val_mask = val_view.target_mask

        history: list[dict] = []
        best = (-1.0, 0, None)
        smote_skipped = 0
        t_start = time.perf_counter()
        writer = self._open_log()
        try:
            for epoch in range(1, tc.max_epochs + 1):
                t0 = time.perf_counter()
                model.train()
                sums = dict(L_CE=0.0, L_SMOTE=0.0, L_triplet=0.0, L_total=0.0)
                for b in range(n_sub):
                    sub = sample_subgraph(adj, cfgs.sampler, rng)
                    batch = GraphBatch.build(train_tokens[sub.nodes], sub.edges)
                    y = torch.as_tensor(train_labels[sub.nodes])
                    w = torch.as_tensor(norms[sub.nodes], dtype=dtype)
                    out = model(batch)
                    f, logits = out["f"], out["logits"]
                    ce = (w * F.cross_entropy(logits, y, reduction="none")).mean()

                    ce_smote = logits.new_zeros(())
                    if tc.use_smote:
                        brng = np.random.default_rng([cfgs.smote.seed, tc.seed, epoch, b])
                        ce_smote, skipped = self._smote_loss(model, out, y == minority,
                                                             minority, brng)
                        if skipped:
                            smote_skipped += 1
                            log.debug("epoch %d batch %d: SMOTE skipped (<2 minority)", epoch, b)
                        ce_smote = logits.new_zeros(()) if ce_smote is None else ce_smote

                    l_trip = logits.new_zeros(())
                    if tc.use_triplet:
                        trng = np.random.default_rng([tc.seed, epoch, b, 7])
                        keep = subsample_per_class(y.numpy(), cfgs.triplet.max_per_class, trng)
                        fk = f[torch.as_tensor(keep)]
                        trip = mine_triplets(fk, y[torch.as_tensor(keep)], cfgs.triplet, rng=trng)
                        l_trip = triplet_loss(trip, fk, cfgs.triplet)

                    total = composite_loss(ce, ce_smote, l_trip, cfgs.smote.weight,
                                           cfgs.triplet.weight, tc.use_smote, tc.use_triplet)
                    parts = dict(L_CE=ce, L_SMOTE=ce_smote, L_triplet=l_trip, L_total=total)
                    if not all(torch.isfinite(v).item() for v in parts.values()):
                        path = _dump_batch(batch.tokens.numpy(), y.numpy(), parts)
                        raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}; "
                                           f"batch dumped to {path}")
                    opt.zero_grad()
                    total.backward()
                    opt.step()
                    for k, v in parts.items():
                        sums[k] += float(v.detach()) / n_sub

                logits = predict_logits(model, eval_batch)
                pred, _ = classify(logits)
                m = prf(labels_all[val_mask], pred.numpy()[val_mask])
                row = {"epoch": epoch, **sums, "val_P": m["precision"], "val_R": m["recall"],
                       "val_F1": m["f1"], "seconds": time.perf_counter() - t0}
                history.append(row)
                if writer is not None:
                    writer.writerow(row)
                    self._log_fh.flush()
                log.info("epoch %3d  loss %.4f  val F1 %.4f", epoch, sums["L_total"], m["f1"])
                if m["f1"] > best[0]:
                    best = (m["f1"], epoch, copy.deepcopy(model.state_dict()))
                elif epoch - best[1] >= tc.patience:
                    break
        finally:
            if writer is not None:
                self._log_fh.close()

        best_f1, best_epoch, state = best
        model.load_state_dict(state)
        self.model = model
        ckpt = Checkpoint(
            state={k: v.detach().cpu().numpy().copy() for k, v in state.items()},
            epoch=best_epoch,
            val_f1=best_f1,
            fingerprint=cfgs.fingerprint(self.dataset_fingerprint),
            dataset_fingerprint=self.dataset_fingerprint,
            config={**cfgs.to_dict(), "vocab_size": forest.vocab_size},
        )
        report = TrainReport(history, best_epoch, best_f1, len(history), smote_skipped,
                             time.perf_counter() - t_start)
        return ckpt, report

    def _smote_loss(self, model, out, mask, minority, rng):
        """CE of the head on synthetic minority samples; ``(None, True)`` if skipped."""
        cfg = self.cfgs.smote
        if cfg.space == "fused":
            parts = [out["f"][mask]]
        else:
            parts = [out[k][mask] for k in ("s", "h", "g") if k in out]
        if cfg.detach:
            parts = [p.detach() for p in parts]
        flat = torch.cat(parts, dim=1).detach().cpu().numpy()
        plan = smote_plan(flat, cfg.n_synth_per_batch, cfg.k_neighbors, rng)
        if plan is None:
            return None, True
        if not len(plan.lam):
            return None, False
        synth = [smote_interpolate(p, plan) for p in parts]
        f = synth[0] if cfg.space == "fused" else model.fusion(*synth)
        target = torch.full((len(f),), minority, dtype=torch.long)
        return F.cross_entropy(model.head(f), target), False

    def _open_log(self):
        if self.log_path is None:
            return None
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log_fh = open(self.log_path, "w", newline="")
        writer = csv.DictWriter(self._log_fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        return writer


def train(forest: DialogueForest, cfgs: Configs | None = None, log_path=None
          ) -> tuple[Checkpoint, TrainReport]:
    return Trainer(forest, cfgs, log_path).fit()


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[GSDFuseNet, Configs]:
    cfg = dict(ckpt.config)
    vocab_size = cfg.pop("vocab_size")
    cfgs = Configs.from_dict(cfg)
    model = build_model(vocab_size, cfgs)
    model.load_state_dict({k: torch.as_tensor(v) for k, v in ckpt.state.items()})
    model.eval()
    return model, cfgs


def evaluate(forest: DialogueForest, ckpt: Checkpoint, split_name: str = "test") -> dict:
    """Inference over the split's visible graph; metrics on its target nodes."""
    ckpt.check_dataset(forest.fingerprint())
    model, cfgs = model_from_checkpoint(ckpt)
    v = view(forest, split_name)
    tokens = forest.token_matrix(model.cfg.max_len)[v.index]
    pred, _ = classify(predict_logits(model, GraphBatch.build(tokens, v.local_edges)))
    out = prf(forest.labels[v.index][v.target_mask], pred.numpy()[v.target_mask])
    out["split"] = split_name
    return out


def write_history(history: list[dict], path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        w.writerows(history)


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
