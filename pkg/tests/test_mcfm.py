import numpy as np
import pytest
import torch

from sammese.data import save_mask_png
from sammese.foundation import seeded_init
from sammese.mcfm import MCFM, CoarseSaliencyHead, SpatialCrossAttention, dump_feature_heatmap


def make_mcfm(channels=8, seed=0, **kw):
    m = MCFM(channels, **kw)
    seeded_init(m, seed)
    return m


class TestFuseInitial:
    def test_shape(self):
        m = make_mcfm()
        out = m.fuse_initial(torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12))
        assert out.shape == (1, 8, 12, 12)

    def test_symmetric_weights_commute(self):
        m = make_mcfm()
        with torch.no_grad():
            w = m.fuse_initial_conv.weight
            w[:, 8:] = w[:, :8]  # same kernel for both channel halves
        a, b = torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12)
        assert torch.allclose(m.fuse_initial(a, b), m.fuse_initial(b, a), atol=1e-6)

    def test_identity_on_first_half(self):
        m = make_mcfm()
        with torch.no_grad():
            m.fuse_initial_conv.weight.zero_()
            m.fuse_initial_conv.bias.zero_()
            for c in range(8):
                m.fuse_initial_conv.weight[c, c, 1, 1] = 1.0  # center tap
        a, b = torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12)
        assert torch.allclose(m.fuse_initial(a, b), a, atol=1e-6)

    def test_shape_mismatch_raises(self):
        m = make_mcfm()
        with pytest.raises(ValueError, match="mismatch"):
            m.fuse_initial(torch.randn(1, 8, 12, 12), torch.randn(1, 8, 10, 10))


class TestEnhanceModality:
    def test_shape(self):
        m = make_mcfm()
        out = m.enhance_modality(torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12), "rgb")
        assert out.shape == (1, 8, 12, 12)

    def test_zero_value_projection_is_identity(self):
        m = make_mcfm()
        with torch.no_grad():
            m.enhance_rgb.v.weight.zero_()
            m.enhance_rgb.v.bias.zero_()
        f = torch.randn(1, 8, 12, 12)
        assert torch.allclose(m.enhance_modality(f, torch.randn_like(f), "rgb"), f, atol=1e-6)

    def test_constant_kv_closed_form(self):
        attn = SpatialCrossAttention(8)
        seeded_init(attn, 1)
        f_q = torch.randn(1, 8, 6, 6, dtype=torch.float64)
        attn = attn.double()
        const = torch.full((1, 8, 6, 6), 0.37, dtype=torch.float64)
        out = attn(f_q, const)
        # constant keys/values: softmax rows average identical value rows, so
        # output = query + value-projection of the constant token
        v_const = attn.v(torch.full((1, 1, 8), 0.37, dtype=torch.float64))
        expected = f_q + v_const[0, 0].reshape(1, 8, 1, 1)
        assert torch.allclose(out, expected, atol=1e-10)


class TestFuseFinal:
    def test_zero_inputs_zero_bias(self):
        m = make_mcfm()
        with torch.no_grad():
            m.fuse_final_conv.bias.zero_()
        z = torch.zeros(1, 8, 12, 12)
        assert (m.fuse_final(z, z) == 0.0).all()

    def test_antisymmetric_halves_cancel(self):
        m = make_mcfm()
        with torch.no_grad():
            w = m.fuse_final_conv.weight
            w[:, 8:] = -w[:, :8]
            m.fuse_final_conv.bias.zero_()
        f = torch.randn(1, 8, 12, 12)
        assert m.fuse_final(f, f).abs().max() < 1e-5


class TestForwardModes:
    def test_full_shape(self):
        m = make_mcfm()
        out = m(torch.randn(2, 8, 12, 12), torch.randn(2, 8, 12, 12))
        assert out.shape == (2, 8, 12, 12)

    def test_simple_mode_is_single_conv(self):
        m = make_mcfm(simple=True)
        a, b = torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12)
        assert torch.allclose(m(a, b), m.fuse_initial(a, b))

    def test_complex_design_differs_from_full(self):
        a, b = torch.randn(1, 8, 12, 12), torch.randn(1, 8, 12, 12)
        full = make_mcfm(seed=5)(a, b)
        cd = make_mcfm(seed=5, complex_design=True)(a, b)
        assert (full - cd).abs().max() > 1e-8

    def test_batch_permutation_equivariance(self):
        m = make_mcfm()
        a, b = torch.randn(3, 8, 12, 12), torch.randn(3, 8, 12, 12)
        perm = torch.tensor([2, 0, 1])
        assert torch.allclose(m(a, b)[perm], m(a[perm], b[perm]), atol=1e-6)


class TestCoarseHead:
    def test_shape_and_range(self):
        head = CoarseSaliencyHead(8)
        seeded_init(head, 0)
        out = head(torch.randn(1, 8, 12, 12), 64)
        assert out.shape == (1, 64, 64)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_zero_weights_constant_half(self):
        head = CoarseSaliencyHead(8)
        with torch.no_grad():
            head.proj.weight.zero_()
            head.proj.bias.zero_()
        out = head(torch.randn(1, 8, 12, 12), 48)
        assert torch.allclose(out, torch.full_like(out, 0.5))

    def test_large_bias_saturates(self):
        head = CoarseSaliencyHead(8)
        with torch.no_grad():
            head.proj.weight.zero_()
            head.proj.bias.fill_(10.0)
        out = head(torch.randn(1, 8, 12, 12), 48)
        assert (out >= 0.9999).all()

    def test_out_size_smaller_than_feature_raises(self):
        head = CoarseSaliencyHead(8)
        with pytest.raises(ValueError, match="out_size"):
            head(torch.randn(1, 8, 12, 12), 8)


def test_heatmap_dump(tmp_path):
    f_sem = torch.randn(1, 8, 12, 12)
    path = tmp_path / "heat.png"
    dump_feature_heatmap(f_sem, path)
    assert path.exists()
