"""Training objectives: embedding-space SMOTE, triplet mining/loss, composite loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ConfigError

MINING = ("semi_hard", "hard", "none")


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    n_synth_per_batch: int = 64
    weight: float = 0.5
    seed: int = 42
    detach: bool = True  # synthetic samples train the head only
    space: str = "fused"  # or "modalities": interpolate [s; h; g] and run them through fusion

    def __post_init__(self):
        if self.space not in ("fused", "modalities"):
            raise ConfigError(f"unknown SMOTE space {self.space!r}")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.weight < 0:
            raise ConfigError("SMOTE weight must be non-negative")
        if self.n_synth_per_batch < 0:
            raise ConfigError("n_synth_per_batch must be non-negative")


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 1.0
    p: int = 2
    weight: float = 0.1
    mining: str = "semi_hard"
    max_per_class: int = 128  # mining subsample per class and batch; bounds O(n^3) work

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError("triplet margin must be positive")
        if self.p not in (1, 2):
            raise ConfigError("distance exponent p must be 1 or 2")
        if self.mining not in MINING:
            raise ConfigError(f"mining must be one of {MINING}")
        if self.weight < 0:
            raise ConfigError("triplet weight must be non-negative")


# -- SMOTE ----------------------------------------------------------------------
@dataclass
class SmotePlan:
    base: np.ndarray       # index of x_i in the minority set
    neighbor: np.ndarray   # index of x_j
    lam: np.ndarray        # interpolation factor in [0, 1]


def smote_plan(minority: np.ndarray, n_synth: int, k_neighbors: int, rng) -> SmotePlan | None:
    """Pick ``(x_i, x_j, lambda)`` for every synthetic sample.

    ``x_i`` is uniform over the minority set and ``x_j`` uniform over its
    ``k`` nearest minority neighbors (Euclidean, self excluded). Returns
    ``None`` when fewer than two minority samples exist.
    """
    minority = np.asarray(minority, dtype=np.float64)
    m = len(minority)
    if m < 2:
        return None
    k = min(k_neighbors, m - 1)
    sq = np.sum(minority ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * minority @ minority.T
    np.fill_diagonal(d2, np.inf)
    knn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    base = rng.integers(0, m, size=n_synth)
    neighbor = knn[base, rng.integers(0, k, size=n_synth)]
    lam = rng.random(n_synth)
    return SmotePlan(base, neighbor, lam)


def smote_interpolate(minority: torch.Tensor, plan: SmotePlan) -> torch.Tensor:
    """``x_new = x_i + lambda * (x_j - x_i)``."""
    lam = torch.as_tensor(plan.lam, dtype=minority.dtype, device=minority.device)[:, None]
    xi = minority[torch.as_tensor(plan.base)]
    xj = minority[torch.as_tensor(plan.neighbor)]
    return xi + lam * (xj - xi)


def smote_synthesize(minority: torch.Tensor, cfg: SmoteConfig = SmoteConfig(), rng=None
                     ) -> torch.Tensor | None:
    """Synthetic minority (stego) embeddings, or ``None`` to signal a skipped batch."""
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    plan = smote_plan(minority.detach().cpu().numpy(), cfg.n_synth_per_batch,
                      cfg.k_neighbors, rng)
    if plan is None:
        return None
    return smote_interpolate(minority, plan)


# -- triplets -------------------------------------------------------------------
@dataclass
class Triplets:
    anchor: torch.Tensor
    positive: torch.Tensor
    negative: torch.Tensor
    fallback: torch.Tensor  # True where no semi-hard negative existed

    def __len__(self):
        return int(self.anchor.numel())

    def as_tuples(self) -> list[tuple[int, int, int]]:
        return list(zip(self.anchor.tolist(), self.positive.tolist(), self.negative.tolist()))


def pairwise_distance(x: torch.Tensor, p: int = 2) -> torch.Tensor:
    diff = x[:, None, :] - x[None, :, :]
    return distance(diff, p)


def distance(diff: torch.Tensor, p: int = 2) -> torch.Tensor:
    """Norm along the last axis; the Euclidean root is kept differentiable at 0."""
    if p == 1:
        return diff.abs().sum(-1)
    sq = (diff * diff).sum(-1)
    return torch.sqrt(sq.clamp_min(1e-30))


def mine_triplets(embeddings: torch.Tensor, labels, cfg: TripletConfig = TripletConfig(),
                  rng=None) -> Triplets:
    """One negative per valid (anchor, positive) pair.

    ``semi_hard`` takes the closest negative with ``D(a,p) < D(a,n) < D(a,p) + margin``
    and falls back to the closest negative when that band is empty; ``hard``
    always takes the closest negative; ``none`` draws a uniform negative.
    Both classes serve as anchors.
    """
    labels = torch.as_tensor(labels).long().cpu()
    emb = embeddings.detach().cpu()
    n = len(labels)
    empty = torch.zeros(0, dtype=torch.long)
    if n == 0 or labels.unique().numel() < 2:
        return Triplets(empty, empty, empty, torch.zeros(0, dtype=torch.bool))
    d = pairwise_distance(emb.to(torch.float64), cfg.p)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~torch.eye(n, dtype=torch.bool)
    a_idx, p_idx = pos_mask.nonzero(as_tuple=True)
    if a_idx.numel() == 0:
        return Triplets(empty, empty, empty, torch.zeros(0, dtype=torch.bool))
    d_ap = d[a_idx, p_idx][:, None]
    d_an = d[a_idx]                       # (pairs, n)
    neg = ~same[a_idx]
    inf = torch.tensor(float("inf"), dtype=d.dtype)
    hardest = torch.where(neg, d_an, inf).argmin(dim=1)
    if cfg.mining == "semi_hard":
        band = neg & (d_an > d_ap) & (d_an < d_ap + cfg.margin)
        has_band = band.any(dim=1)
        semi = torch.where(band, d_an, inf).argmin(dim=1)
        n_idx = torch.where(has_band, semi, hardest)
        fallback = ~has_band
    elif cfg.mining == "hard":
        n_idx = hardest
        fallback = torch.zeros(len(a_idx), dtype=torch.bool)
    else:
        rng = np.random.default_rng(rng)
        weights = neg.double()
        u = torch.as_tensor(rng.random(len(a_idx)), dtype=torch.float64)
        cdf = weights.cumsum(dim=1)
        n_idx = torch.searchsorted(cdf, (u * cdf[:, -1])[:, None], right=True).squeeze(1)
        fallback = torch.zeros(len(a_idx), dtype=torch.bool)
    return Triplets(a_idx, p_idx, n_idx, fallback)


def subsample_per_class(labels: np.ndarray, max_per_class: int, rng) -> np.ndarray:
    """Indices keeping at most ``max_per_class`` random members of each class."""
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) > max_per_class:
            idx = np.sort(rng.choice(idx, size=max_per_class, replace=False))
        keep.append(idx)
    return np.sort(np.concatenate(keep)) if keep else np.zeros(0, dtype=np.int64)


def triplet_hinge(d_ap, d_an, margin: float):
    """``max(0, D(a,p) - D(a,n) + margin)``."""
    if isinstance(d_ap, torch.Tensor) or isinstance(d_an, torch.Tensor):
        return torch.relu(d_ap - d_an + margin)
    return max(0.0, d_ap - d_an + margin)


def triplet_loss(triples: Triplets, embeddings: torch.Tensor,
                 cfg: TripletConfig = TripletConfig()) -> torch.Tensor:
    """Mean hinge over the mined triples; 0 for an empty set."""
    if len(triples) == 0:
        return embeddings.sum() * 0.0
    dev = embeddings.device
    a = embeddings[triples.anchor.to(dev)]
    p = embeddings[triples.positive.to(dev)]
    n = embeddings[triples.negative.to(dev)]
    return triplet_hinge(distance(a - p, cfg.p), distance(a - n, cfg.p), cfg.margin).mean()


# -- composite ------------------------------------------------------------------
def composite_loss(ce_real, ce_smote=0.0, l_triplet=0.0, smote_weight: float = 0.5,
                   triplet_weight: float = 0.1, use_smote: bool = True,
                   use_triplet: bool = True):
    """``L_CE + w_smote * L_SMOTE_CE + w_triplet * L_triplet``; disabled terms add exactly 0."""
    total = ce_real
    if use_smote and smote_weight:
        total = total + smote_weight * ce_smote
    if use_triplet and triplet_weight:
        total = total + triplet_weight * l_triplet
    return total
