import numpy as np
import pytest
import torch

from oracles import derive_geometric_oracle
from sammese.config import toy_config
from sammese.foundation import PromptEncoder, seeded_init
from sammese.prompts import PromptGenerator, assemble_decoder_inputs, derive_geometric


class TestDeriveGeometric:
    def test_rectangle_box_and_center(self):
        coarse = np.zeros((16, 16))
        coarse[2:6, 3:10] = 1.0  # rows 2..5, cols 3..9 inclusive
        geo = derive_geometric(coarse)
        assert geo.boxes == [(3, 2, 9, 5)]
        assert geo.points == [((6, 3), 1)]

    def test_empty_foreground_fallback(self):
        coarse = np.full((8, 8), 0.2)
        coarse[5, 6] = 0.4  # below threshold but the argmax
        geo = derive_geometric(coarse)
        assert geo.boxes == []
        assert geo.points == [((6, 5), 1)]
        assert geo.mask.shape == (8, 8)

    def test_two_blobs_capped_points(self):
        coarse = np.zeros((16, 16))
        coarse[1:5, 1:5] = 1.0    # 16 px
        coarse[8:15, 8:15] = 1.0  # 49 px, larger
        geo = derive_geometric(coarse, max_points=1)
        assert len(geo.points) == 1
        (px, py), _ = geo.points[0]
        assert 8 <= px <= 14 and 8 <= py <= 14  # on the larger blob
        assert geo.boxes == [(1, 1, 14, 14)]    # spans both blobs

    def test_min_area_filter(self):
        coarse = np.zeros((32, 32))
        coarse[4:20, 4:20] = 1.0
        coarse[30, 30] = 1.0  # 1 px < 0.5% of 1024
        geo = derive_geometric(coarse, min_area_frac=0.005)
        assert geo.boxes == [(4, 4, 19, 19)]
        assert len(geo.points) == 1

    def test_centroid_snap_for_concave_component(self):
        # ring-like component whose centroid falls in the hole
        coarse = np.zeros((9, 9))
        coarse[2:7, 2:7] = 1.0
        coarse[3:6, 3:6] = 0.0
        geo = derive_geometric(coarse, min_area_frac=0.0)
        (px, py), _ = geo.points[0]
        assert coarse[py, px] == 1.0

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(12)
        coarse = rng.uniform(0, 1, (12, 12))
        prev = None
        for t in (0.2, 0.4, 0.6, 0.8):
            fg = int((coarse > t).sum())
            if prev is not None:
                assert fg <= prev
            prev = fg

    def test_matches_oracle_on_random_maps(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            coarse = rng.uniform(0, 1, (8, 8))
            geo = derive_geometric(coarse)
            boxes, points = derive_geometric_oracle(coarse)
            assert geo.boxes == boxes
            assert geo.points == points

    def test_per_component_boxes(self):
        coarse = np.zeros((16, 16))
        coarse[1:5, 1:5] = 1.0
        coarse[9:14, 9:14] = 1.0
        geo = derive_geometric(coarse, per_component_boxes=True)
        assert sorted(geo.boxes) == [(1, 1, 4, 4), (9, 9, 13, 13)]

    def test_to_encoder_space(self):
        coarse = np.zeros((16, 16))
        coarse[2:6, 3:10] = 1.0
        geo = derive_geometric(coarse)
        boxes, points = geo.to_encoder_space(64)
        # inclusive corner 9 becomes exclusive edge 10, scaled by 4
        assert boxes == [(12.0, 8.0, 40.0, 24.0)]
        ((x, y), lab) = points[0]
        assert (x, y) == (26.0, 14.0)  # pixel-center (6.5, 3.5) * 4
        assert lab == 1

    def test_json_dump_roundtrip(self):
        coarse = np.zeros((8, 8))
        coarse[2:5, 2:5] = 1.0
        d = derive_geometric(coarse).to_json_dict()
        assert d["boxes"] == [[2.0, 2.0, 4.0, 4.0]]
        assert d["points"][0]["label"] == 1


class TestPromptGenerator:
    def _gen(self, num_queries=30, seed=0):
        gen = PromptGenerator(8, query_dim=16, out_dim=32, num_queries=num_queries)
        seeded_init(gen, seed)
        with torch.no_grad():
            gen.queries.normal_(0.0, 0.5, generator=torch.Generator().manual_seed(seed))
        return gen

    def test_output_shape(self):
        gen = self._gen()
        p = gen(torch.randn(2, 8, 12, 12))
        assert p.shape == (2, 30, 32)

    def test_query_permutation_equivariance(self):
        gen = self._gen(num_queries=6)
        f_sem = torch.randn(1, 8, 12, 12)
        out = gen(f_sem)
        perm = torch.randperm(6, generator=torch.Generator().manual_seed(3))
        with torch.no_grad():
            gen.queries.copy_(gen.queries[perm])
        out_perm = gen(f_sem)
        assert torch.allclose(out[:, perm], out_perm, atol=1e-5)

    def test_constant_fsem_identical_query_rows(self):
        gen = self._gen(num_queries=4)
        with torch.no_grad():
            gen.queries.copy_(gen.queries[0:1].expand_as(gen.queries))
        f_sem = torch.full((1, 8, 12, 12), 0.37)
        out = gen(f_sem)
        assert torch.allclose(out, out[:, 0:1].expand_as(out), atol=1e-6)

    def test_zero_queries(self):
        gen = self._gen(num_queries=0)
        assert gen(torch.randn(1, 8, 12, 12)).shape == (1, 0, 32)


class TestAssemble:
    def _encoder(self, dim=32, grid=4, input_size=64):
        enc = PromptEncoder(dim, grid, input_size)
        seeded_init(enc, 0)
        return enc

    def test_token_count_box_point_queries(self):
        enc = self._encoder()
        coarse = np.zeros((16, 16))
        coarse[2:6, 3:10] = 1.0
        geo = derive_geometric(coarse)
        p_sem = torch.randn(1, 30, 32)
        sparse, dense = assemble_decoder_inputs(p_sem, geo, enc)
        assert sparse.shape == (1, 33, 32)  # 2 box corners + 1 point + 30
        assert dense.shape == (1, 32, 4, 4)

    def test_fallback_token_count(self):
        enc = self._encoder()
        geo = derive_geometric(np.full((16, 16), 0.1))
        sparse, _ = assemble_decoder_inputs(torch.randn(1, 30, 32), geo, enc)
        assert sparse.shape == (1, 31, 32)

    def test_no_semantic_tokens(self):
        enc = self._encoder()
        coarse = np.zeros((16, 16))
        coarse[2:6, 3:10] = 1.0
        geo = derive_geometric(coarse)
        sparse, _ = assemble_decoder_inputs(torch.zeros(1, 0, 32), geo, enc)
        assert sparse.shape == (1, 3, 32)

    def test_no_geometric(self):
        enc = self._encoder()
        sparse, dense = assemble_decoder_inputs(torch.randn(1, 30, 32), None, enc)
        assert sparse.shape == (1, 30, 32)
        assert dense.shape == (1, 32, 4, 4)

    def test_channel_mismatch_raises(self):
        enc = self._encoder()
        with pytest.raises(ValueError, match="width"):
            assemble_decoder_inputs(torch.randn(1, 30, 16), None, enc)
