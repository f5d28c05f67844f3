"""Full architecture: frozen foundation plus the trainable fusion, adapter,
prompt-generation, and coarse-saliency components."""

import numpy as np
import torch
import torch.nn as nn

from .adapters import SemanticAligner, build_adapter_stack
from .config import RunConfig
from .foundation import build_foundation, seeded_init
from .mcfm import MCFM, CoarseSaliencyHead
from .prompts import PromptGenerator, assemble_decoder_inputs, derive_geometric
from .registry import ParameterRegistry


class Sammese(nn.Module):
    def __init__(self, cfg: RunConfig, weights_path=None):
        super().__init__()
        self.cfg = cfg
        self.foundation = build_foundation(cfg, weights_path)
        c_sem = cfg.pyramid_widths[-1]
        c_img = cfg.encoder_dim
        num_queries = 0 if cfg.no_semantic else cfg.num_queries

        trainable = {
            "mcfm": MCFM(
                c_sem, cfg.attn_heads,
                complex_design=cfg.mcfm_complex_design, simple=cfg.no_mcfm,
            ),
            "coarse_head": CoarseSaliencyHead(c_sem),
            "prompt_gen": PromptGenerator(
                c_sem, query_dim=c_img, out_dim=c_img,
                num_queries=num_queries, heads=cfg.attn_heads,
            ),
        }
        if cfg.madapter_variant != "none":
            trainable["madapter"] = nn.ModuleDict(
                {
                    "aligner": SemanticAligner(
                        c_sem, c_img, self.foundation.image_encoder.grid
                    ),
                    "stack": build_adapter_stack(
                        cfg.encoder_blocks, c_img, cfg.bottleneck_dim,
                        cfg.madapter_variant,
                    ),
                }
            )
        self.trainable = nn.ModuleDict(trainable)
        seeded_init(self.trainable, cfg.seed)
        if "madapter" in self.trainable:
            for pair in self.trainable["madapter"]["stack"]:
                for adapter in pair:
                    adapter.reset_up_projection()
        self.registry().enforce()

    # ---- pieces -----------------------------------------------------------

    def registry(self) -> ParameterRegistry:
        return ParameterRegistry.from_model(self)

    def _adapter_pairs(self):
        if "madapter" not in self.trainable:
            return None
        return [tuple(pair) for pair in self.trainable["madapter"]["stack"]]

    def fuse_semantic(self, rgb_small, aux_small):
        pyr_rgb = self.foundation.semantic_encoder(rgb_small)
        pyr_aux = self.foundation.semantic_encoder(aux_small)
        return self.trainable["mcfm"](pyr_rgb[-1], pyr_aux[-1])

    def encode_adapted(self, rgb_large, f_sem):
        pairs = self._adapter_pairs()
        sem_tokens = None
        if pairs is not None:
            sem_tokens = self.trainable["madapter"]["aligner"](f_sem)
        return self.foundation.image_encoder(
            rgb_large, adapters=pairs, sem_tokens=sem_tokens
        )

    def geometric_prompts(self, coarse_map: np.ndarray):
        cfg = self.cfg
        return derive_geometric(
            coarse_map,
            threshold=cfg.mask_threshold,
            max_points=cfg.max_points,
            min_area_frac=cfg.min_area_frac,
            per_component_boxes=cfg.per_component_boxes,
        )

    # ---- forward ----------------------------------------------------------

    def forward(self, rgb_large, rgb_small, aux_small):
        """Returns dict with m_sal [b,S,S], m_sal_coarse [b,s,s], f_sem, geo."""
        f_sem = self.fuse_semantic(rgb_small, aux_small)
        coarse = self.trainable["coarse_head"](f_sem, self.cfg.mcfm_input_size)
        img_emb = self.encode_adapted(rgb_large, f_sem)
        p_sem = self.trainable["prompt_gen"](f_sem)

        masks, geos = [], []
        for i in range(rgb_large.shape[0]):
            if self.cfg.no_geometric:
                geo = None
            else:
                # geometric extraction is non-differentiable; the coarse map
                # is trained only through its own supervision
                geo = self.geometric_prompts(coarse[i].detach().cpu().numpy())
            sparse, dense = assemble_decoder_inputs(
                p_sem[i : i + 1], geo, self.foundation.prompt_encoder
            )
            masks.append(
                self.foundation.mask_decoder(img_emb[i : i + 1], sparse, dense)[0]
            )
            geos.append(geo)
        return {
            "m_sal": torch.stack(masks),
            "m_sal_coarse": coarse,
            "f_sem": f_sem,
            "geo": geos,
        }

    def learnable_parameter_count(self) -> int:
        return self.registry().trainable_count()


def samples_to_tensors(preprocessed, dtype=torch.float32, device="cpu"):
    """Stack PreprocessedSamples into model input tensors plus gt."""

    def stack(arrs):
        return torch.as_tensor(np.stack(arrs), dtype=dtype, device=device)

    rgb_large = stack([s.rgb_large for s in preprocessed])
    rgb_small = stack([s.rgb_small for s in preprocessed])
    aux_small = stack([s.aux_small for s in preprocessed])
    gt_large = stack([s.gt_large for s in preprocessed])
    return rgb_large, rgb_small, aux_small, gt_large
