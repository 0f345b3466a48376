"""Random-walk subgraph sampling and loss-normalization estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, SamplerError


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "random_walk"
    roots_per_sample: int = 1000
    walk_depth: int = 2
    node_budget: int = 2000
    sample_coverage: int = 50

    def __post_init__(self):
        if self.strategy != "random_walk":
            raise ConfigError(f"unsupported sampler strategy {self.strategy!r}")
        for name in ("roots_per_sample", "walk_depth", "node_budget", "sample_coverage"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.node_budget < self.roots_per_sample:
            raise ConfigError("node_budget must be >= roots_per_sample")


class Adjacency:
    """CSR neighbor lists of an undirected graph on ``n`` local node indices."""

    def __init__(self, edges: np.ndarray, n: int):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        self.n = n
        self.edges = edges
        self.indices = dst[order]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, src + 1, 1)
        self.indptr = np.cumsum(self.indptr)

    @classmethod
    def from_view(cls, view) -> "Adjacency":
        return cls(view.local_edges, view.n_nodes)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def induced_edges(self, nodes: np.ndarray) -> np.ndarray:
        """Edges with both endpoints in ``nodes``, relabelled to positions in ``nodes``."""
        local = np.full(self.n, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        e = local[self.edges]
        return e[(e >= 0).all(axis=1)]


@dataclass
class Subgraph:
    nodes: np.ndarray        # sorted local indices into the parent graph
    edges: np.ndarray        # (E, 2) positions inside ``nodes``
    visit_counts: np.ndarray  # walker visits per entry of ``nodes``

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def random_walks(adj: Adjacency, roots: np.ndarray, depth: int, rng) -> np.ndarray:
    """``(len(roots), depth + 1)`` walk positions; walks halt at isolated nodes."""
    walks = np.empty((len(roots), depth + 1), dtype=np.int64)
    cur = np.asarray(roots, dtype=np.int64)
    walks[:, 0] = cur
    deg = adj.degree
    for step in range(1, depth + 1):
        d = deg[cur]
        offset = np.floor(rng.random(len(cur)) * np.maximum(d, 1)).astype(np.int64)
        nxt = adj.indices[np.minimum(adj.indptr[cur] + offset, len(adj.indices) - 1)] \
            if len(adj.indices) else cur
        cur = np.where(d > 0, nxt, cur)
        walks[:, step] = cur
    return walks


def sample_subgraph(adj: Adjacency, cfg: SamplerConfig, rng) -> Subgraph:
    """Union of ``walk_depth``-step walks from uniform roots, capped at ``node_budget``."""
    if adj.n == 0:
        raise SamplerError("cannot sample from an empty view")
    rng = np.random.default_rng(rng)
    roots = rng.choice(adj.n, size=min(cfg.roots_per_sample, adj.n), replace=False)
    walks = random_walks(adj, roots, cfg.walk_depth, rng)
    visits = np.bincount(walks.ravel(), minlength=adj.n)
    nodes = np.flatnonzero(visits)
    if len(nodes) > cfg.node_budget:
        nodes = np.sort(rng.choice(nodes, size=cfg.node_budget, replace=False))
    return Subgraph(nodes, adj.induced_edges(nodes), visits[nodes])


def estimate_norms(adj: Adjacency, cfg: SamplerConfig, rng) -> np.ndarray:
    """Per-node loss weights from ``sample_coverage`` preliminary subgraphs.

    ``w_v = 1 / (count_v + 1)`` normalized to mean 1, where ``count_v`` is
    the number of subgraphs containing ``v``.
    """
    rng = np.random.default_rng(rng)
    counts = np.zeros(adj.n, dtype=np.int64)
    for _ in range(cfg.sample_coverage):
        counts[sample_subgraph(adj, cfg, rng).nodes] += 1
    return normalize_inverse_counts(counts)


def normalize_inverse_counts(counts: np.ndarray) -> np.ndarray:
    w = 1.0 / (np.asarray(counts, dtype=np.float64) + 1.0)
    return w / w.mean()
