"""The full detector network: s -> h -> g -> fuse -> classify."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .encoders import GIN, AttentionGNN, SemanticAggregator, components, global_summary, semantic_profile
from .exceptions import ConfigError
from .fusion import ClassifierHead, ConcatFusion, GAUFusion, GauConfig

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    max_len: int = 32
    sca_channels: int = 128
    kernel_sizes: tuple = (3, 4, 5)
    gnn_dim: int = 192
    gnn_heads: int = 8
    gnn_layers: int = 2
    gnn_dropout: float = 0.2
    gin_dim: int = 192
    gin_layers: int = 2
    gin_dropout: float = 0.1
    gin_pool: str = "component"  # or "graph"
    gau: GauConfig = field(default_factory=GauConfig)
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(self.kernel_sizes))
        if isinstance(self.gau, dict):
            object.__setattr__(self, "gau", GauConfig(**self.gau))
        if self.gin_pool not in ("component", "graph"):
            raise ConfigError(f"unknown gin_pool {self.gin_pool!r}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def semantic_dim(self) -> int:
        return self.sca_channels * len(self.kernel_sizes)

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]


@dataclass
class GraphBatch:
    """Model input for one (sub)graph.

    ``edges`` are undirected ``(E, 2)`` positions; ``component`` labels the
    connected component of every node inside this graph.
    """

    tokens: torch.Tensor
    edges: torch.Tensor
    component: torch.Tensor

    @classmethod
    def build(cls, tokens: np.ndarray, edges: np.ndarray) -> "GraphBatch":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        comp = components(edges, len(tokens))
        return cls(torch.as_tensor(tokens, dtype=torch.long),
                   torch.as_tensor(edges, dtype=torch.long),
                   torch.as_tensor(comp, dtype=torch.long))

    @property
    def n_nodes(self) -> int:
        return self.tokens.shape[0]


class GSDFuseNet(nn.Module):
    """Parameter names follow the checkpoint manifest: ``embedding``, ``sca``,
    ``gnn``, ``gin``, ``gau`` (or ``concat`` without GAU) and ``head``."""

    def __init__(self, vocab_size: int, cfg: ModelConfig = ModelConfig(),
                 use_gin: bool = True, use_gau: bool = True):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.use_gin = use_gin
        self.use_gau = use_gau
        d_s = cfg.semantic_dim
        self.embedding = nn.Embedding(vocab_size + 1, cfg.embed_dim, padding_idx=vocab_size)
        self.sca = SemanticAggregator(cfg.embed_dim, cfg.sca_channels, cfg.kernel_sizes)
        self.gnn = AttentionGNN(d_s, cfg.gnn_dim, cfg.gnn_heads, cfg.gnn_layers, cfg.gnn_dropout)
        in_dims = [d_s, cfg.gnn_dim]
        if use_gin:
            self.gin = GIN(d_s, cfg.gin_dim, cfg.gin_layers, cfg.gin_dropout)
            in_dims.append(cfg.gin_dim)
        if use_gau:
            self.gau = GAUFusion(in_dims, cfg.gau)
        else:
            self.concat = ConcatFusion(in_dims, cfg.gau.model_dim)
        self.head = ClassifierHead(cfg.gau.model_dim)
        self.to(cfg.torch_dtype)

    @property
    def fusion(self) -> nn.Module:
        return self.gau if self.use_gau else self.concat

    @property
    def pad_id(self) -> int:
        return self.vocab_size

    def features(self, batch: GraphBatch) -> dict[str, torch.Tensor]:
        s = semantic_profile(self.embedding, self.sca, batch.tokens)
        h = self.gnn(s, batch.edges)
        out = {"s": s, "h": h}
        mods = [s, h]
        if self.use_gin:
            comp = batch.component if self.cfg.gin_pool == "component" else None
            g = global_summary(self.gin(s, batch.edges), comp)
            out["g"] = g
            mods.append(g)
        out["f"] = self.fusion(*mods)
        return out

    def forward(self, batch: GraphBatch) -> dict[str, torch.Tensor]:
        out = self.features(batch)
        out["logits"] = self.head(out["f"])
        return out
