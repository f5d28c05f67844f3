"""Low-rank bottleneck adapters with a semantic-gated fusion unit, inserted
residual-parallel at the attention and MLP stages of each frozen encoder
block. Up-projections are zero-initialized so training starts from the
pristine frozen model."""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

VARIANTS = ("full", "sum", "fx", "fsem")


class SemanticAligner(nn.Module):
    """Resamples f_sem to the encoder token grid and projects its channels to
    the encoder width; shared by all adapters of one model."""

    def __init__(self, sem_channels, encoder_dim, grid):
        super().__init__()
        self.grid = grid
        self.proj = nn.Conv2d(sem_channels, encoder_dim, kernel_size=1)

    def forward(self, f_sem):
        f = F.interpolate(
            f_sem, size=(self.grid, self.grid), mode="bilinear", align_corners=False
        )
        f = self.proj(f)
        return f.flatten(2).transpose(1, 2)  # [b, grid*grid, c]


class MultiModalAdapter(nn.Module):
    """down-project both streams, gate the input stream by sigmoid(semantic),
    residual-add, 3x3 conv in the bottleneck, ReLU, up-project.

    Variants wire the ablations: "sum" replaces the gate with plain addition,
    "fx" is the original input-only adapter, "fsem" adapts the semantic
    stream alone.
    """

    def __init__(self, channels, bottleneck, variant="full"):
        super().__init__()
        if bottleneck >= channels:
            raise ValueError(
                f"bottleneck {bottleneck} must be smaller than width {channels}"
            )
        if variant not in VARIANTS:
            raise ValueError(f"unknown adapter variant {variant!r}")
        self.channels = channels
        self.bottleneck = bottleneck
        self.variant = variant
        self.down = nn.Linear(channels, bottleneck)
        self.down_sem = nn.Linear(channels, bottleneck)
        self.fuse_conv = nn.Conv2d(bottleneck, bottleneck, 3, padding=1)
        self.up = nn.Linear(bottleneck, channels)
        self.reset_up_projection()

    def reset_up_projection(self):
        with torch.no_grad():
            self.up.weight.zero_()
            self.up.bias.zero_()

    def _to_grid(self, tokens):
        b, d, m = tokens.shape
        side = math.isqrt(d)
        if side * side != d:
            raise ValueError(f"token count {d} is not a perfect square")
        return tokens.transpose(1, 2).reshape(b, m, side, side), side

    def fusion_unit(self, x_low, sem_low):
        if x_low.shape != sem_low.shape:
            raise ValueError(
                f"fusion inputs differ: {tuple(x_low.shape)} vs {tuple(sem_low.shape)}"
            )
        if self.variant == "sum":
            mixed = x_low + sem_low
        else:
            mixed = x_low + x_low * torch.sigmoid(sem_low)
        grid, side = self._to_grid(mixed)
        out = self.fuse_conv(grid)
        return out.flatten(2).transpose(1, 2)

    def adapter_plain(self, f_x):
        if f_x.shape[-1] != self.channels:
            raise ValueError(
                f"expected width {self.channels}, got {f_x.shape[-1]}"
            )
        return self.up(F.relu(self.down(f_x)))

    def forward(self, f_x, sem_tokens):
        if f_x.shape[-1] != self.channels:
            raise ValueError(f"expected width {self.channels}, got {f_x.shape[-1]}")
        if self.variant == "fx":
            return self.adapter_plain(f_x)
        if self.variant == "fsem":
            return self.up(F.relu(self.down_sem(sem_tokens)))
        if sem_tokens.shape[1] != f_x.shape[1]:
            raise ValueError(
                f"semantic tokens ({sem_tokens.shape[1]}) do not match the "
                f"encoder token grid ({f_x.shape[1]})"
            )
        x_low = self.down(f_x)
        sem_low = self.down_sem(sem_tokens)
        return self.up(F.relu(self.fusion_unit(x_low, sem_low)))

    def parameter_count(self):
        """Analytic size: c*m + c*m + 9*m*m + m*c plus biases (3m + c)."""
        c, m = self.channels, self.bottleneck
        return 3 * c * m + 9 * m * m + 3 * m + c


def build_adapter_stack(num_blocks, channels, bottleneck, variant="full"):
    """One independent (attention-stage, MLP-stage) adapter pair per block."""
    return nn.ModuleList(
        nn.ModuleList(
            MultiModalAdapter(channels, bottleneck, variant) for _ in range(2)
        )
        for _ in range(num_blocks)
    )
