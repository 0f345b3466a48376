"""Per-node encoders: semantic CNN profile, attention GNN context, GIN summary."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import ConfigError

_BUCKET_EDGES = (6, 10, 16, 24)
_BUCKET_MIN_ROWS = 256


class SemanticAggregator(nn.Module):
    """Parallel 1-D convolutions + ReLU + max-over-time, concatenated.

    Only windows starting at ``t <= max(L - k, 0)`` take part in the max, so
    padding never produces a window of its own; a sequence shorter than the
    kernel keeps exactly one window, zero padded.
    """

    def __init__(self, embed_dim: int, channels: int = 128, kernel_sizes=(3, 4, 5)):
        super().__init__()
        self.kernel_sizes = tuple(kernel_sizes)
        for k in self.kernel_sizes:
            self.add_module(f"conv{k}", nn.Conv1d(embed_dim, channels, k))
        self.out_dim = channels * len(self.kernel_sizes)

    def forward(self, emb: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        # emb: (n, L_max, d_e) with zero rows at pad positions
        x = emb.transpose(1, 2)
        L = x.shape[-1]
        pooled = []
        for k in self.kernel_sizes:
            xk = F.pad(x, (0, k - L)) if L < k else x
            y = F.relu(getattr(self, f"conv{k}")(xk))
            last_start = (lengths - k).clamp(min=0)
            starts = torch.arange(y.shape[-1], device=y.device)
            invalid = starts[None, :] > last_start[:, None]
            y = y.masked_fill(invalid[:, None, :], float("-inf"))
            pooled.append(y.max(dim=-1).values)
        return torch.cat(pooled, dim=-1)


def sequence_lengths(tokens: torch.Tensor, pad_id: int) -> torch.Tensor:
    return (tokens != pad_id).sum(dim=1).clamp(min=1)


def semantic_profile(embedding: nn.Embedding, sca: SemanticAggregator,
                     tokens: torch.Tensor) -> torch.Tensor:
    """``s = SCA(E(w_1), ..., E(w_L))`` for a padded ``(n, L_max)`` id matrix."""
    pad_id = embedding.padding_idx
    if tokens.numel() and (int(tokens.max()) > pad_id or int(tokens.min()) < 0):
        raise IndexError(f"token id outside [0, {pad_id - 1}] (pad id {pad_id})")
    lengths = sequence_lengths(tokens, pad_id)
    if len(tokens) <= _BUCKET_MIN_ROWS:
        width = int(lengths.max()) if tokens.numel() else 1
        return sca(embedding(tokens[:, :width]), lengths)
    # rows grouped by length so short messages skip trailing pad columns
    out = None
    edges = _BUCKET_EDGES + (tokens.shape[1],)
    lo = 0
    for hi in edges:
        rows = torch.nonzero((lengths > lo) & (lengths <= hi)).squeeze(1)
        lo = hi
        if rows.numel() == 0:
            continue
        part = sca(embedding(tokens[rows, :hi]), lengths[rows])
        if out is None:
            out = part.new_zeros(len(tokens), part.shape[1])
        out = out.index_copy(0, rows, part)
        if hi >= tokens.shape[1]:
            break
    return out


def edge_index_with_self_loops(edges: torch.Tensor, n: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Symmetric ``(src, dst)`` arrays from undirected pairs plus one self loop per node."""
    loops = torch.arange(n, device=edges.device)
    if edges.numel():
        src = torch.cat([edges[:, 0], edges[:, 1], loops])
        dst = torch.cat([edges[:, 1], edges[:, 0], loops])
    else:
        src, dst = loops, loops
    return src, dst


def symmetric_edges(edges: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if not edges.numel():
        empty = torch.zeros(0, dtype=torch.long, device=edges.device)
        return empty, empty
    return (torch.cat([edges[:, 0], edges[:, 1]]), torch.cat([edges[:, 1], edges[:, 0]]))


class GraphAttentionLayer(nn.Module):
    """Multi-head additive attention over neighbors and self.

    Scores ``LeakyReLU(a_dst . W h_i + a_src . W h_j)`` are softmax-normalized
    over ``j in N(i) + {i}``; heads are concatenated.
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int = 8, negative_slope: float = 0.2):
        super().__init__()
        if out_dim % heads:
            raise ConfigError(f"attention width {out_dim} is not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = out_dim // heads
        self.lin = nn.Linear(in_dim, out_dim, bias=False)
        self.att_src = nn.Parameter(torch.empty(heads, self.head_dim))
        self.att_dst = nn.Parameter(torch.empty(heads, self.head_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim))
        self.negative_slope = negative_slope
        nn.init.xavier_uniform_(self.att_src)
        nn.init.xavier_uniform_(self.att_dst)

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        n = x.shape[0]
        wh = self.lin(x).view(n, self.heads, self.head_dim)
        a_src = (wh * self.att_src).sum(-1)
        a_dst = (wh * self.att_dst).sum(-1)
        score = F.leaky_relu(a_src[src] + a_dst[dst], self.negative_slope)  # (E, H)
        smax = torch.full((n, self.heads), float("-inf"), dtype=x.dtype, device=x.device)
        smax = smax.scatter_reduce(0, dst[:, None].expand_as(score), score.detach(), "amax")
        w = torch.exp(score - smax[dst])
        denom = torch.zeros(n, self.heads, dtype=x.dtype, device=x.device).index_add(0, dst, w)
        alpha = w / denom[dst]
        out = torch.zeros_like(wh).index_add(0, dst, alpha[..., None] * wh[src])
        return out.reshape(n, -1) + self.bias


class AttentionGNN(nn.Module):
    """Input projection, then [attention layer, pointwise layer] x ``n_layers``."""

    def __init__(self, in_dim: int = 384, hidden: int = 192, heads: int = 8,
                 n_layers: int = 2, dropout: float = 0.2):
        super().__init__()
        self.input = nn.Linear(in_dim, hidden)
        for i in range(1, n_layers + 1):
            layer = nn.Module()
            layer.attn = GraphAttentionLayer(hidden, hidden, heads)
            layer.ffn = nn.Linear(hidden, hidden)
            self.add_module(f"layer{i}", layer)
        self.n_layers = n_layers
        self.dropout = nn.Dropout(dropout)
        self.in_dim = in_dim

    def forward(self, s: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        if s.shape[-1] != self.in_dim:
            raise ConfigError(f"expected {self.in_dim}-dim features, got {s.shape[-1]}")
        src, dst = edge_index_with_self_loops(edges, s.shape[0])
        h = self.input(s)
        for i in range(1, self.n_layers + 1):
            layer = getattr(self, f"layer{i}")
            h = self.dropout(F.relu(layer.attn(h, src, dst)))
            h = layer.ffn(h)
            if i < self.n_layers:
                h = F.relu(h)
        return h


class GINLayer(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, learn_eps: bool = True):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(in_dim, out_dim), nn.ReLU(), nn.Linear(out_dim, out_dim))
        eps = torch.zeros(1)
        if learn_eps:
            self.eps = nn.Parameter(eps)
        else:
            self.register_buffer("eps", eps)

    def aggregate(self, h: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        """``(1 + eps) h_v + sum_{u in N(v)} h_u``."""
        return (1 + self.eps) * h + torch.zeros_like(h).index_add(0, dst, h[src])

    def forward(self, h, src, dst):
        return self.mlp(self.aggregate(h, src, dst))


class GIN(nn.Module):
    def __init__(self, in_dim: int = 384, hidden: int = 192, n_layers: int = 2,
                 dropout: float = 0.1, learn_eps: bool = True):
        super().__init__()
        dims = [in_dim] + [hidden] * n_layers
        for i in range(1, n_layers + 1):
            self.add_module(f"layer{i}", GINLayer(dims[i - 1], dims[i], learn_eps))
        self.n_layers = n_layers
        self.dropout = nn.Dropout(dropout)
        self.in_dim = in_dim

    def forward(self, h: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.in_dim:
            raise ConfigError(f"expected {self.in_dim}-dim features, got {h.shape[-1]}")
        src, dst = symmetric_edges(edges)
        for i in range(1, self.n_layers + 1):
            h = getattr(self, f"layer{i}")(h, src, dst)
            if i < self.n_layers:
                h = F.relu(h)
            h = self.dropout(h)
        return h


def components(edges: np.ndarray, n: int) -> np.ndarray:
    """Connected-component label per node for an undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(adj, directed=False)[1]


def global_summary(gin_out: torch.Tensor, component: torch.Tensor | None) -> torch.Tensor:
    """Mean of ``gin_out`` over each node's component, broadcast back.

    ``component=None`` pools over the whole (sub)graph instead.
    """
    if component is None:
        return gin_out.mean(dim=0, keepdim=True).expand_as(gin_out)
    n_comp = int(component.max()) + 1 if component.numel() else 0
    sums = torch.zeros(n_comp, gin_out.shape[1], dtype=gin_out.dtype,
                       device=gin_out.device).index_add(0, component, gin_out)
    counts = torch.bincount(component, minlength=n_comp).to(gin_out.dtype)
    return (sums / counts[:, None])[component]
