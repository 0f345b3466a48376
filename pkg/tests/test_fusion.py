import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gsdfuse.exceptions import ConfigError, NumericError
from gsdfuse.fusion import (LAPLACE_MU, ClassifierHead, ConcatFusion, GAUFusion, GauConfig,
                            classify, laplace_attention)

from oracles import gradient_relative_error

D = torch.float64


def small_gau(in_dims=(8, 4, 4), dropout=0.0, mode="sequence", seed=0):
    torch.manual_seed(seed)
    return GAUFusion(in_dims, GauConfig(model_dim=8, dropout=dropout, mode=mode)).to(D).eval()


def test_default_dimensions():
    cfg = GauConfig()
    assert cfg.qk_dim == 48 and cfg.expansion == 2
    gau = GAUFusion((384, 192, 192), cfg)
    assert gau.z.out_features == 48 and gau.u.out_features == 384
    f = gau.eval()(torch.randn(3, 384), torch.randn(3, 192), torch.randn(3, 192))
    assert f.shape == (3, 192)


def test_config_invariants():
    with pytest.raises(ConfigError):
        GauConfig(model_dim=192, qk_dim=32)
    with pytest.raises(ConfigError):
        GauConfig(expansion=3)


def test_laplace_properties():
    assert laplace_attention(torch.tensor(LAPLACE_MU, dtype=D)).item() == 0.5
    x = torch.linspace(-5, 5, 2001, dtype=D)
    y = laplace_attention(x)
    assert torch.all(y[1:] >= y[:-1]) and torch.all(y > 0) and torch.all(y <= 1)
    # strictly below 1 wherever float64 can represent it
    assert torch.all(laplace_attention(torch.linspace(-5, 2, 701, dtype=D)) < 1)
    # closed form at one point
    v = 0.5 * (1 + math.erf((1.0 - math.sqrt(0.5)) / (math.sqrt(1 / (4 * math.pi)) * math.sqrt(2))))
    assert laplace_attention(torch.tensor(1.0, dtype=D)).item() == pytest.approx(v, abs=1e-15)


def test_zero_weights_give_zero_output():
    gau = small_gau()
    with torch.no_grad():
        for p in gau.parameters():
            p.zero_()
    f = gau(torch.randn(5, 8, dtype=D), torch.randn(5, 4, dtype=D), torch.randn(5, 4, dtype=D))
    assert torch.count_nonzero(f) == 0


def test_tied_projections_constant_sequence():
    gau = small_gau(in_dims=(4, 4, 4))
    with torch.no_grad():
        gau.proj_h.load_state_dict(gau.proj_s.state_dict())
        gau.proj_g.load_state_dict(gau.proj_s.state_dict())
    x = torch.randn(3, 4, dtype=D)
    seq = gau.sequence(x, x, x)
    out = gau.attend(seq)
    assert torch.allclose(out[:, 0], out[:, 1]) and torch.allclose(out[:, 0], out[:, 2])
    assert torch.allclose(gau(x, x, x), out[:, 0], atol=1e-14)


def test_default_is_order_sensitive():
    gau = small_gau()
    s, h, g = torch.randn(2, 8, dtype=D), torch.randn(2, 4, dtype=D), torch.randn(2, 4, dtype=D)
    assert not torch.allclose(gau(s, h, g), gau(s, g, h))


def test_manual_forward():
    gau = small_gau()
    s, h, g = torch.randn(2, 8, dtype=D), torch.randn(2, 4, dtype=D), torch.randn(2, 4, dtype=D)
    x = torch.stack([gau.proj_s(s), gau.proj_h(h), gau.proj_g(g)], 1)
    z = torch.nn.functional.silu(gau.z(x))
    q = z * gau.gamma_q + gau.beta_q
    k = z * gau.gamma_k + gau.beta_k
    a = 0.5 * (1 + torch.erf((q @ k.transpose(1, 2) / 2 - LAPLACE_MU)
                             / (math.sqrt(1 / (4 * math.pi)) * math.sqrt(2))))
    u = torch.nn.functional.silu(gau.u(x))
    v = torch.nn.functional.silu(gau.v(x))
    expected = gau.w_o(u * (a @ v)).mean(1)
    assert torch.allclose(gau(s, h, g), expected, atol=1e-13)


def test_two_modalities_without_gin():
    gau = small_gau(in_dims=(8, 4))
    f = gau(torch.randn(3, 8, dtype=D), torch.randn(3, 4, dtype=D))
    assert f.shape == (3, 8)
    assert gau.sequence(torch.randn(3, 8, dtype=D), torch.randn(3, 4, dtype=D)).shape[1] == 2
    with pytest.raises(ConfigError):
        gau(torch.randn(3, 8, dtype=D))


def test_single_position_mode():
    gau = small_gau(mode="single")
    f = gau(torch.randn(3, 8, dtype=D), torch.randn(3, 4, dtype=D), torch.randn(3, 4, dtype=D))
    assert f.shape == (3, 8) and hasattr(gau, "proj_cat")


def test_non_finite_input_raises():
    gau = small_gau()
    s = torch.randn(2, 8, dtype=D)
    s[0, 0] = float("nan")
    with pytest.raises(NumericError):
        gau(s, torch.randn(2, 4, dtype=D), torch.randn(2, 4, dtype=D))


def test_gau_gradient_matches_fd():
    gau = small_gau(seed=4)
    s = torch.randn(3, 8, dtype=D, requires_grad=True)
    h = torch.randn(3, 4, dtype=D, requires_grad=True)
    g = torch.randn(3, 4, dtype=D, requires_grad=True)
    w = torch.randn(3, 8, dtype=D)
    params = [s, h, g] + list(gau.parameters())
    assert gradient_relative_error(lambda: (gau(s, h, g) * w).sum(), params) < 1e-4


def test_concat_fusion_is_affine():
    c = ConcatFusion((3, 2), 4).to(D)
    a, b = torch.randn(5, 3, dtype=D), torch.randn(5, 2, dtype=D)
    assert torch.allclose(c(a, b), torch.cat([a, b], 1) @ c.affine.weight.T + c.affine.bias)


def test_classify_examples():
    label, p = classify(torch.tensor([[0.0, 1.0]], dtype=D))
    assert label.item() == 1 and p.item() == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)
    label, p = classify(torch.tensor([[0.0, 0.0]], dtype=D))
    assert label.item() == 0 and p.item() == 0.5


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=2), st.floats(-100, 100))
def test_classify_shift_invariant_and_normalized(logits, c):
    x = torch.tensor([logits], dtype=D)
    label, p = classify(x)
    label2, _ = classify(x + c)
    probs = torch.softmax(x, -1)
    assert abs(probs.sum().item() - 1.0) < 1e-12
    if abs(logits[0] - logits[1]) > 1e-9:
        assert label.item() == label2.item()


def test_head_outputs_two_logits():
    assert ClassifierHead(192)(torch.randn(4, 192)).shape == (4, 2)
