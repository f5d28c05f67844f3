"""Multi-modal complementary fusion: concat+conv integration, per-modality
cross-attention enhancement, final fusion to f_sem, and the coarse saliency
head used both for supervision and as the mask prompt source."""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .foundation import Attention


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


class SpatialCrossAttention(nn.Module):
    """Single-head (default) cross-attention over flattened spatial tokens
    with a residual connection back to the query feature map."""

    def __init__(self, channels, heads=1):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)

    def forward(self, f_q, f_kv):
        _check_same_shape(f_q, f_kv, "cross-attention inputs")
        b, c, h, w = f_q.shape
        q_tok = f_q.flatten(2).transpose(1, 2)
        kv_tok = f_kv.flatten(2).transpose(1, 2)
        dh = c // self.heads
        q = self.q(q_tok).reshape(b, -1, self.heads, dh).transpose(1, 2)
        k = self.k(kv_tok).reshape(b, -1, self.heads, dh).transpose(1, 2)
        v = self.v(kv_tok).reshape(b, -1, self.heads, dh).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, -1, c)
        out = q_tok + out
        return out.transpose(1, 2).reshape(b, c, h, w)


class MCFM(nn.Module):
    """Fuses top-level rgb/aux pyramid features into f_sem.

    `complex_design` adds self-attention after both fusion products (the
    heavier ablation variant); `simple` collapses the module to a single
    concat + 3x3 convolution (the removal ablation).
    """

    def __init__(self, channels, heads=1, complex_design=False, simple=False):
        super().__init__()
        self.channels = channels
        self.simple = simple
        self.complex_design = complex_design
        self.fuse_initial_conv = nn.Conv2d(2 * channels, channels, 3, padding=1)
        if not simple:
            self.enhance_rgb = SpatialCrossAttention(channels, heads)
            self.enhance_aux = SpatialCrossAttention(channels, heads)
            self.fuse_final_conv = nn.Conv2d(2 * channels, channels, 3, padding=1)
            if complex_design:
                self.self_attn_mul = Attention(channels, heads)
                self.self_attn_sem = Attention(channels, heads)

    def _self_attend(self, attn, f):
        b, c, h, w = f.shape
        tok = f.flatten(2).transpose(1, 2)
        tok = tok + attn(tok)
        return tok.transpose(1, 2).reshape(b, c, h, w)

    def fuse_initial(self, f_rgb4, f_aux4):
        _check_same_shape(f_rgb4, f_aux4, "fuse_initial")
        return self.fuse_initial_conv(torch.cat([f_rgb4, f_aux4], dim=1))

    def enhance_modality(self, f_m4, f_mul, modality):
        attn = self.enhance_rgb if modality == "rgb" else self.enhance_aux
        return attn(f_m4, f_mul)

    def fuse_final(self, f_rgb4_hat, f_aux4_hat):
        _check_same_shape(f_rgb4_hat, f_aux4_hat, "fuse_final")
        return self.fuse_final_conv(torch.cat([f_rgb4_hat, f_aux4_hat], dim=1))

    def forward(self, f_rgb4, f_aux4):
        f_mul = self.fuse_initial(f_rgb4, f_aux4)
        if self.simple:
            return f_mul
        if self.complex_design:
            f_mul = self._self_attend(self.self_attn_mul, f_mul)
        f_rgb_hat = self.enhance_modality(f_rgb4, f_mul, "rgb")
        f_aux_hat = self.enhance_modality(f_aux4, f_mul, "aux")
        f_sem = self.fuse_final(f_rgb_hat, f_aux_hat)
        if self.complex_design:
            f_sem = self._self_attend(self.self_attn_sem, f_sem)
        return f_sem


class CoarseSaliencyHead(nn.Module):
    """1x1 projection to one channel, bilinear upsample, sigmoid."""

    def __init__(self, channels):
        super().__init__()
        self.proj = nn.Conv2d(channels, 1, kernel_size=1)

    def forward(self, f_sem, out_size: int):
        if out_size < f_sem.shape[-1]:
            raise ValueError(
                f"out_size {out_size} smaller than feature size {f_sem.shape[-1]}"
            )
        logits = self.proj(f_sem)
        logits = F.interpolate(
            logits, size=(out_size, out_size), mode="bilinear", align_corners=False
        )
        return torch.sigmoid(logits[:, 0])


def dump_feature_heatmap(f_sem: torch.Tensor, path):
    """Channel-mean heatmap of f_sem as PNG, min-max normalized per image."""
    from .data import save_mask_png

    heat = f_sem.detach().mean(dim=1)[0].cpu().numpy()
    lo, hi = heat.min(), heat.max()
    if hi > lo:
        heat = (heat - lo) / (hi - lo)
    else:
        heat = heat * 0.0
    save_mask_png(heat, path)
