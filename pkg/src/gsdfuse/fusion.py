"""Gated-attention fusion of semantic, local and global node features."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ConfigError, NumericError

LAPLACE_MU = math.sqrt(0.5)
LAPLACE_SIGMA = math.sqrt(1.0 / (4.0 * math.pi))


def laplace_attention(x: torch.Tensor, mu: float = LAPLACE_MU,
                      sigma: float = LAPLACE_SIGMA) -> torch.Tensor:
    """``0.5 * (1 + erf((x - mu) / (sigma * sqrt(2))))``, via erfc to keep the lower tail positive."""
    return 0.5 * torch.erfc((mu - x) / (sigma * math.sqrt(2.0)))


@dataclass(frozen=True)
class GauConfig:
    model_dim: int = 192
    qk_dim: int | None = None
    expansion: int = 2
    dropout: float = 0.2
    mode: str = "sequence"  # "sequence": modalities as 3 positions; "single": one concatenated position

    def __post_init__(self):
        if self.qk_dim is None:
            object.__setattr__(self, "qk_dim", self.model_dim // 4)
        if self.qk_dim * 4 != self.model_dim:
            raise ConfigError("qk_dim must be exactly model_dim / 4")
        if self.expansion != 2:
            raise ConfigError("the GAU expansion factor is fixed at 2")
        if self.mode not in ("sequence", "single"):
            raise ConfigError(f"unknown GAU mode {self.mode!r}")


class GAUFusion(nn.Module):
    """Single gated attention unit over the projected modalities.

    Each modality is projected to ``model_dim``; the projections form a short
    sequence. A shared SiLU transform ``Z`` yields queries and keys through
    per-use scale/offset, ``A = laplace(Q K^T / qk_dim)``, and the output
    ``(U * (A V)) W_o`` is averaged over positions.
    """

    def __init__(self, in_dims=(384, 192, 192), cfg: GauConfig = GauConfig()):
        super().__init__()
        self.cfg = cfg
        d, e, qk = cfg.model_dim, cfg.expansion * cfg.model_dim, cfg.qk_dim
        self.in_dims = tuple(in_dims)
        if cfg.mode == "single":
            self.proj_cat = nn.Linear(sum(self.in_dims), d)
        else:
            for name, dim in zip(("proj_s", "proj_h", "proj_g"), self.in_dims):
                self.add_module(name, nn.Linear(dim, d))
        self.z = nn.Linear(d, qk)
        self.gamma_q = nn.Parameter(torch.empty(qk))
        self.beta_q = nn.Parameter(torch.zeros(qk))
        self.gamma_k = nn.Parameter(torch.empty(qk))
        self.beta_k = nn.Parameter(torch.zeros(qk))
        self.u = nn.Linear(d, e)
        self.v = nn.Linear(d, e)
        self.w_o = nn.Linear(e, d)
        self.dropout = nn.Dropout(cfg.dropout)
        nn.init.normal_(self.gamma_q, mean=1.0, std=0.02)
        nn.init.normal_(self.gamma_k, mean=1.0, std=0.02)
        self.out_dim = d

    def sequence(self, *features: torch.Tensor) -> torch.Tensor:
        if len(features) != len(self.in_dims):
            raise ConfigError(f"expected {len(self.in_dims)} modalities, got {len(features)}")
        if self.cfg.mode == "single":
            return self.proj_cat(torch.cat(features, dim=-1))[:, None, :]
        names = ("proj_s", "proj_h", "proj_g")
        return torch.stack([getattr(self, n)(x) for n, x in zip(names, features)], dim=1)

    def attend(self, x: torch.Tensor) -> torch.Tensor:
        """GAU block on ``(n, T, d)``; returns ``(n, T, d)``."""
        z = F.silu(self.z(x))
        q = z * self.gamma_q + self.beta_q
        k = z * self.gamma_k + self.beta_k
        attn = laplace_attention(q @ k.transpose(1, 2) / self.cfg.qk_dim)
        attn = self.dropout(attn)
        u = F.silu(self.u(x))
        v = F.silu(self.v(x))
        return self.w_o(u * (attn @ v))

    def forward(self, *features: torch.Tensor) -> torch.Tensor:
        for x in features:
            if not torch.isfinite(x).all():
                raise NumericError("non-finite value in a fusion input")
        return self.attend(self.sequence(*features)).mean(dim=1)


class ConcatFusion(nn.Module):
    """Plain concatenation followed by one affine map (GAU ablation)."""

    def __init__(self, in_dims=(384, 192, 192), model_dim: int = 192):
        super().__init__()
        self.in_dims = tuple(in_dims)
        self.affine = nn.Linear(sum(self.in_dims), model_dim)
        self.out_dim = model_dim

    def forward(self, *features: torch.Tensor) -> torch.Tensor:
        return self.affine(torch.cat(features, dim=-1))


class ClassifierHead(nn.Module):
    def __init__(self, in_dim: int = 192):
        super().__init__()
        self.affine = nn.Linear(in_dim, 2)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return self.affine(f)


def classify(logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Labels and stego probabilities from ``(n, 2)`` logits.

    A node is stego only when ``P(S) > P(C)``; exact ties go to cover.
    """
    prob = torch.softmax(logits, dim=-1)
    label = (logits[..., 1] > logits[..., 0]).long()
    return label, prob[..., 1]
