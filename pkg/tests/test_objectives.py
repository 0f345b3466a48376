import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gsdfuse.exceptions import ConfigError
from gsdfuse.objectives import (SmoteConfig, SmotePlan, TripletConfig, Triplets, composite_loss,
                                mine_triplets, smote_interpolate, smote_plan, smote_synthesize,
                                subsample_per_class, triplet_hinge, triplet_loss)

from oracles import gradient_relative_error

D = torch.float64


def plan(base, neighbor, lam):
    return SmotePlan(np.array(base), np.array(neighbor), np.array(lam, dtype=float))


# -- SMOTE ---------------------------------------------------------------------------
def test_smote_midpoint_and_endpoints():
    x = torch.tensor([[0.0, 0.0], [2.0, 4.0]], dtype=D)
    out = smote_interpolate(x, plan([0, 0, 0], [1, 1, 1], [0.5, 0.0, 1.0]))
    assert out.tolist() == [[1.0, 2.0], [0.0, 0.0], [2.0, 4.0]]


def test_smote_two_point_segment():
    a, b = np.array([1.0, -2.0, 3.0]), np.array([4.0, 0.5, -1.0])
    x = torch.tensor(np.stack([a, b]), dtype=D)
    out = smote_synthesize(x, SmoteConfig(n_synth_per_batch=1000), np.random.default_rng(0)).numpy()
    assert out.shape == (1000, 3)
    d = b - a
    t = (out - a) @ d / (d @ d)
    assert np.all(t >= -1e-9) and np.all(t <= 1 + 1e-9)
    assert np.abs(out - (a + np.outer(t, d))).max() < 1e-9


def test_smote_neighbors_match_brute_force():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(12, 4))
    p = smote_plan(x, 500, 3, np.random.default_rng(2))
    for i, j in zip(p.base, p.neighbor):
        d = np.linalg.norm(x - x[i], axis=1)
        d[i] = np.inf
        assert j in np.argsort(d)[:3]
        assert j != i
    assert np.all((p.lam >= 0) & (p.lam < 1))


def test_smote_deterministic_and_counts():
    x = torch.randn(10, 5, dtype=D)
    a = smote_synthesize(x, SmoteConfig(), np.random.default_rng(7))
    b = smote_synthesize(x, SmoteConfig(), np.random.default_rng(7))
    assert a.shape == (64, 5) and torch.equal(a, b)


def test_smote_skip_signal():
    assert smote_synthesize(torch.randn(1, 3), SmoteConfig()) is None
    assert smote_plan(np.zeros((0, 3)), 4, 5, np.random.default_rng(0)) is None


def test_smote_k_capped_by_set_size():
    p = smote_plan(np.random.default_rng(0).normal(size=(3, 2)), 50, 5, np.random.default_rng(1))
    assert set(zip(p.base.tolist(), p.neighbor.tolist())) <= {(i, j) for i in range(3) for j in range(3) if i != j}


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 15), seed=st.integers(0, 10_000))
def test_smote_outputs_are_convex_combinations(m, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, 3))
    p = smote_plan(x, 20, 5, rng)
    out = smote_interpolate(torch.tensor(x), p).numpy()
    expected = x[p.base] + p.lam[:, None] * (x[p.neighbor] - x[p.base])
    assert np.allclose(out, expected, atol=1e-12)


def test_smote_config_validation():
    with pytest.raises(ConfigError):
        SmoteConfig(k_neighbors=0)
    with pytest.raises(ConfigError):
        SmoteConfig(weight=-1)
    with pytest.raises(ConfigError):
        SmoteConfig(space="raw")


# -- triplets ------------------------------------------------------------------------
def line_batch(pos, negs):
    """Anchor at 0, positive at ``pos``, negatives on the other side of the axis."""
    pts = [[0.0, 0.0], [0.0, pos]] + [[n, 0.0] for n in negs]
    labels = [0, 0] + [1] * len(negs)
    return torch.tensor(pts, dtype=D), torch.tensor(labels)


def test_semi_hard_band_pick():
    emb, labels = line_batch(0.5, [0.4, 0.8, 2.0])
    t = mine_triplets(emb, labels, TripletConfig(margin=1.0))
    chosen = dict(((a, p), n) for a, p, n in t.as_tuples())
    assert chosen[(0, 1)] == 3
    assert not t.fallback[t.anchor.tolist().index(0)]


def test_semi_hard_fallback_to_hardest():
    emb, labels = line_batch(0.5, [2.0, 3.0])
    t = mine_triplets(emb, labels, TripletConfig(margin=1.0))
    idx = [i for i, (a, p, _) in enumerate(t.as_tuples()) if (a, p) == (0, 1)][0]
    assert t.negative[idx].item() == 2 and t.fallback[idx]


def test_hard_and_random_mining():
    emb, labels = line_batch(0.5, [0.4, 0.8, 2.0])
    hard = mine_triplets(emb, labels, TripletConfig(mining="hard"))
    assert dict(((a, p), n) for a, p, n in hard.as_tuples())[(0, 1)] == 2
    rnd = mine_triplets(emb, labels, TripletConfig(mining="none"), rng=0)
    assert all(labels[n] != labels[a] for a, _, n in rnd.as_tuples())


def test_single_class_gives_empty_set():
    t = mine_triplets(torch.randn(5, 3), torch.zeros(5, dtype=torch.long))
    assert len(t) == 0
    assert triplet_loss(t, torch.randn(5, 3)).item() == 0.0


def brute_force_semi_hard(d, labels, margin):
    out = {}
    n = len(labels)
    for a in range(n):
        for p in range(n):
            if p == a or labels[p] != labels[a]:
                continue
            negs = [k for k in range(n) if labels[k] != labels[a]]
            band = [k for k in negs if d[a, p] < d[a, k] < d[a, p] + margin]
            pool = band or negs
            out[(a, p)] = (min(pool, key=lambda k: (d[a, k], k)), not band)
    return out


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 14), seed=st.integers(0, 10_000))
def test_mining_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    labels = rng.integers(0, 2, n)
    if len(set(labels.tolist())) < 2:
        labels[0] = 1 - labels[0]
    t = mine_triplets(torch.tensor(x), labels, TripletConfig(margin=1.0))
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    ref = brute_force_semi_hard(d, labels, 1.0)
    got = {(a, p): (nn, bool(f)) for (a, p, nn), f in zip(t.as_tuples(), t.fallback.tolist())}
    assert got == ref
    for a, p, nn in t.as_tuples():
        assert labels[a] == labels[p] != labels[nn]


def test_triplet_loss_examples():
    assert triplet_hinge(0.5, 2.0, 1.0) == 0.0
    assert triplet_hinge(1.5, 1.0, 1.0) == 1.5
    emb = torch.tensor([[0.0, 0.0], [1.5, 0.0], [0.0, 1.0]], dtype=D)
    t = Triplets(torch.tensor([0]), torch.tensor([1]), torch.tensor([2]), torch.tensor([False]))
    assert triplet_loss(t, emb).item() == pytest.approx(1.5, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-50, 50))
def test_triplet_loss_translation_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    emb = torch.tensor(rng.normal(size=(8, 3)))
    labels = torch.tensor([0, 0, 0, 0, 1, 1, 1, 1])
    t = mine_triplets(emb, labels)
    a = triplet_loss(t, emb).item()
    b = triplet_loss(t, emb + shift).item()
    assert a == pytest.approx(b, abs=1e-9)


def test_triplet_gradient_off_kink():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 5:
        emb = torch.tensor(rng.normal(size=(6, 3)), requires_grad=True)
        labels = torch.tensor([0, 0, 0, 1, 1, 1])
        t = mine_triplets(emb, labels)
        d = emb.detach()
        gap = ((d[t.anchor] - d[t.positive]).norm(dim=1) - (d[t.anchor] - d[t.negative]).norm(dim=1) + 1)
        if gap.abs().min() <= 1e-3:
            continue
        err = gradient_relative_error(lambda: triplet_loss(t, emb), [emb])
        assert err < 1e-4
        checked += 1


def test_subsample_per_class():
    labels = np.array([0] * 300 + [1] * 5)
    keep = subsample_per_class(labels, 128, np.random.default_rng(0))
    assert (labels[keep] == 0).sum() == 128 and (labels[keep] == 1).sum() == 5


def test_triplet_config_validation():
    for bad in (dict(margin=0), dict(p=3), dict(mining="easy"), dict(weight=-0.1)):
        with pytest.raises(ConfigError):
            TripletConfig(**bad)


# -- composite -----------------------------------------------------------------------
def test_composite_examples():
    assert composite_loss(1.0, 0.4, 2.0) == pytest.approx(1.4)
    assert composite_loss(1.0, 0.4, 2.0, use_smote=False, use_triplet=False) == 1.0
    assert composite_loss(1.0, 0.4, 2.0, triplet_weight=0.0) == pytest.approx(1.2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1))
def test_composite_is_linear(ce, sm, tr, ws, wt):
    assert composite_loss(ce, sm, tr, ws, wt) == pytest.approx(ce + ws * sm + wt * tr, abs=1e-12)
