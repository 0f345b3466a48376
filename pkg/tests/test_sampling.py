import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsdfuse.exceptions import ConfigError, SamplerError
from gsdfuse.graph import view
from gsdfuse.sampling import (Adjacency, SamplerConfig, estimate_norms, normalize_inverse_counts,
                              random_walks, sample_subgraph)


def random_tree_edges(n, rng):
    return np.array([(i, int(rng.integers(0, i))) for i in range(1, n)]).reshape(-1, 2)


def test_isolated_nodes():
    adj = Adjacency(np.zeros((0, 2), dtype=int), 10)
    sub = sample_subgraph(adj, SamplerConfig(), np.random.default_rng(0))
    assert sub.nodes.tolist() == list(range(10)) and len(sub.edges) == 0
    assert sub.visit_counts.tolist() == [3] * 10


def test_path_reachability():
    adj = Adjacency(np.array([[0, 1], [1, 2]]), 3)
    for s in range(20):
        w = random_walks(adj, np.array([0]), 2, np.random.default_rng(s))
        assert w[0, 0] == 0 and set(w[0].tolist()) <= {0, 1, 2}
        # each step moves to an actual neighbor
        for a, b in zip(w[0][:-1], w[0][1:]):
            assert b in adj.indices[adj.indptr[a]:adj.indptr[a + 1]]


def test_walks_stop_at_isolated_nodes():
    adj = Adjacency(np.array([[0, 1]]), 3)
    w = random_walks(adj, np.array([2, 0]), 2, np.random.default_rng(0))
    assert w[0].tolist() == [2, 2, 2]


def test_csr_neighbors_match_edge_list():
    rng = np.random.default_rng(0)
    edges = random_tree_edges(50, rng)
    adj = Adjacency(edges, 50)
    for v in range(50):
        expected = sorted([b for a, b in edges if a == v] + [a for a, b in edges if b == v])
        assert adj.indices[adj.indptr[v]:adj.indptr[v + 1]].tolist() == expected


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 400), roots=st.integers(1, 50), extra=st.integers(0, 50),
       depth=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_budget_and_induced_edges(n, roots, extra, depth, seed):
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(n, rng)
    adj = Adjacency(edges, n)
    cfg = SamplerConfig(roots_per_sample=roots, walk_depth=depth, node_budget=roots + extra)
    sub = sample_subgraph(adj, cfg, rng)
    assert len(sub.nodes) <= cfg.node_budget
    assert np.all(np.diff(sub.nodes) > 0)
    inside = set(sub.nodes.tolist())
    expected = {tuple(sorted((int(a), int(b)))) for a, b in edges if a in inside and b in inside}
    got = {tuple(sorted((int(sub.nodes[a]), int(sub.nodes[b])))) for a, b in sub.edges}
    assert got == expected


def test_coverage_on_large_forest():
    rng = np.random.default_rng(0)
    n = 10_000
    adj = Adjacency(random_tree_edges(n, rng), n)
    seen = np.zeros(n, dtype=int)
    for _ in range(50):
        sub = sample_subgraph(adj, SamplerConfig(), rng)
        assert sub.n_nodes <= 2000
        seen[sub.nodes] += 1
    # expected inclusions per node ~ 50 * 2000 / 10^4 = 10; the chance of zero is negligible
    assert (seen == 0).mean() < 0.01


def test_norms_uniform_counts_are_one():
    assert np.allclose(normalize_inverse_counts(np.full(7, 4)), 1.0, rtol=0, atol=1e-15)


def test_norm_of_unseen_node_is_finite():
    w = normalize_inverse_counts(np.array([0, 1, 3]))
    raw = np.array([1.0, 0.5, 0.25])
    assert np.allclose(w, raw / raw.mean())


def test_estimated_norms_mean_one(small_forest):
    adj = Adjacency.from_view(view(small_forest, "train"))
    w = estimate_norms(adj, SamplerConfig(roots_per_sample=20, node_budget=40, sample_coverage=50),
                       np.random.default_rng(0))
    assert abs(w.mean() - 1.0) < 1e-9 and np.all(np.isfinite(w)) and np.all(w > 0)


def test_empty_view_and_config_errors():
    with pytest.raises(SamplerError):
        sample_subgraph(Adjacency(np.zeros((0, 2), dtype=int), 0), SamplerConfig(), 0)
    with pytest.raises(ConfigError):
        SamplerConfig(node_budget=10, roots_per_sample=20)
    with pytest.raises(ConfigError):
        SamplerConfig(walk_depth=0)
    with pytest.raises(ConfigError):
        SamplerConfig(strategy="edge")
