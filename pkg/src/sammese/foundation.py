"""Frozen foundation segmenter: patch-transformer image encoder with per-block
adapter hook points, a point/box/mask prompt encoder, a lightweight mask
decoder, and a 4-level hierarchical semantic encoder.

Two backends share this code: the tiny random-initialized stub used for tests
and desk-scale runs, and a ViT-B-scale configuration that can ingest
name-mapped pretrained weights for the image encoder.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import RunConfig

FOUNDATION_SEED = 1234  # frozen weights are a pure function of architecture


def seeded_init(module: nn.Module, seed: int):
    """Deterministically re-initialize every parameter of `module`."""
    g = torch.Generator().manual_seed(seed)
    for name, p in module.named_parameters():
        with torch.no_grad():
            if p.numel() == 0:
                continue
            if "norm" in name and name.endswith("weight") and p.dim() == 1:
                p.fill_(1.0)
            elif name.endswith("bias"):
                p.zero_()
            elif p.dim() >= 2:
                fan_in = p.numel() // p.shape[0]
                p.normal_(0.0, 1.0 / math.sqrt(fan_in), generator=g)
            else:
                p.normal_(0.0, 0.02, generator=g)


def sinusoidal_grid_pe(h: int, w: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Fixed 2-D sinusoidal positional encoding, [h*w, dim]."""
    if dim % 4 != 0:
        raise ValueError("positional encoding dim must be divisible by 4")
    quarter = dim // 4
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(quarter, dtype=dtype) / max(quarter - 1, 1)
    )
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype), torch.arange(w, dtype=dtype), indexing="ij"
    )
    parts = []
    for coords in (ys.reshape(-1), xs.reshape(-1)):
        ang = coords[:, None] * freqs[None, :]
        parts.extend([torch.sin(ang), torch.cos(ang)])
    return torch.cat(parts, dim=1)


def coord_pe(coords: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of normalized (x, y) in [0,1], [k, dim]."""
    quarter = dim // 4
    freqs = torch.exp(
        -math.log(10000.0)
        * torch.arange(quarter, dtype=coords.dtype, device=coords.device)
        / max(quarter - 1, 1)
    ) * (2.0 * math.pi * 8.0)
    parts = []
    for axis in range(2):
        ang = coords[:, axis : axis + 1] * freqs[None, :]
        parts.extend([torch.sin(ang), torch.cos(ang)])
    return torch.cat(parts, dim=1)


class Attention(nn.Module):
    """Plain softmax self-attention with learned qkv and output projections."""

    def __init__(self, dim, heads=1):
        super().__init__()
        if dim % heads != 0:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, c = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).unbind(2)
        q, k, v = (t.transpose(1, 2) for t in (q, k, v))  # [b, h, n, dh]
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1]), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class CrossAttention(nn.Module):
    def __init__(self, dim_q, dim_kv, dim, heads=1):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim_q, dim)
        self.k = nn.Linear(dim_kv, dim)
        self.v = nn.Linear(dim_kv, dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, q_in, kv_in):
        b, nq, _ = q_in.shape
        nk = kv_in.shape[1]
        dh = self.q.out_features // self.heads
        q = self.q(q_in).reshape(b, nq, self.heads, dh).transpose(1, 2)
        k = self.k(kv_in).reshape(b, nk, self.heads, dh).transpose(1, 2)
        v = self.v(kv_in).reshape(b, nk, self.heads, dh).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, nq, -1)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim, hidden=None):
        super().__init__()
        hidden = hidden or 4 * dim
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class EncoderBlock(nn.Module):
    """Pre-norm transformer block with residual-parallel adapter hook points.

    With adapters attached, each sublayer computes
    `x + frozen_sublayer(norm(x)) + adapter(x, sem)`, so zero-initialized
    adapters leave the frozen forward untouched.
    """

    def __init__(self, dim, heads=1):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim)

    def forward(self, x, adapter_pair=None, sem_tokens=None):
        attn_adapter, mlp_adapter = adapter_pair if adapter_pair else (None, None)
        delta = attn_adapter(x, sem_tokens) if attn_adapter is not None else 0.0
        x = x + self.attn(self.norm1(x)) + delta
        delta = mlp_adapter(x, sem_tokens) if mlp_adapter is not None else 0.0
        x = x + self.mlp(self.norm2(x)) + delta
        return x


class ImageEncoder(nn.Module):
    """Patch-embedding transformer encoder producing a grid image embedding."""

    def __init__(self, input_size, patch_size, dim, depth, heads=1):
        super().__init__()
        if input_size % patch_size != 0:
            raise ValueError("input_size must be divisible by patch_size")
        self.input_size = input_size
        self.patch_size = patch_size
        self.grid = input_size // patch_size
        self.dim = dim
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.blocks = nn.ModuleList(EncoderBlock(dim, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        self.register_buffer(
            "pos", sinusoidal_grid_pe(self.grid, self.grid, dim).unsqueeze(0)
        )

    def forward(self, img, adapters=None, sem_tokens=None):
        if img.shape[-1] != self.input_size or img.shape[-2] != self.input_size:
            raise ValueError(
                f"expected {self.input_size}x{self.input_size} input, "
                f"got {tuple(img.shape[-2:])}"
            )
        if adapters is not None and len(adapters) != len(self.blocks):
            raise ValueError(
                f"got {len(adapters)} adapter pairs for {len(self.blocks)} blocks"
            )
        x = self.patch_embed(img)  # [b, c, g, g]
        b, c, g, _ = x.shape
        x = x.flatten(2).transpose(1, 2) + self.pos
        for i, block in enumerate(self.blocks):
            pair = adapters[i] if adapters is not None else None
            x = block(x, adapter_pair=pair, sem_tokens=sem_tokens)
        x = self.norm(x)
        return x.transpose(1, 2).reshape(b, c, g, g)


class PromptEncoder(nn.Module):
    """Embeds point/box/mask prompts into sparse tokens and a dense map.

    The mask prompt enters at 4x the embedding grid and is downscaled
    internally; absent masks use a learned (frozen) no-mask embedding.
    """

    def __init__(self, dim, grid, input_size):
        super().__init__()
        self.dim = dim
        self.grid = grid
        self.input_size = input_size
        self.mask_in_size = 4 * grid
        self.point_embed = nn.Parameter(torch.zeros(dim))
        self.box_corner_embed = nn.Parameter(torch.zeros(2, dim))
        self.no_mask_embed = nn.Parameter(torch.zeros(dim))
        self.mask_down = nn.Sequential(
            nn.Conv2d(1, dim // 4, kernel_size=2, stride=2),
            nn.GELU(),
            nn.Conv2d(dim // 4, dim, kernel_size=2, stride=2),
            nn.GELU(),
            nn.Conv2d(dim, dim, kernel_size=1),
        )

    def _check_bounds(self, xy):
        x, y = float(xy[0]), float(xy[1])
        if not (0 <= x <= self.input_size and 0 <= y <= self.input_size):
            raise ValueError(
                f"prompt coordinate ({x}, {y}) outside image bounds "
                f"[0, {self.input_size}]"
            )

    def forward(self, points=None, boxes=None, mask=None):
        """points: [((x, y), label)], boxes: [(x0, y0, x1, y1)], mask: [h, w]."""
        p = self.point_embed
        sparse = []
        for (xy, label) in points or []:
            self._check_bounds(xy)
            if label != 1:
                raise ValueError("only foreground (label 1) points are supported")
            coords = torch.tensor(
                [[xy[0] / self.input_size, xy[1] / self.input_size]], dtype=p.dtype
            )
            sparse.append(coord_pe(coords, self.dim)[0] + self.point_embed)
        for (x0, y0, x1, y1) in boxes or []:
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"degenerate box ({x0}, {y0}, {x1}, {y1})")
            self._check_bounds((x0, y0))
            self._check_bounds((x1, y1))
            corners = torch.tensor(
                [
                    [x0 / self.input_size, y0 / self.input_size],
                    [x1 / self.input_size, y1 / self.input_size],
                ],
                dtype=p.dtype,
            )
            pe = coord_pe(corners, self.dim)
            sparse.append(pe[0] + self.box_corner_embed[0])
            sparse.append(pe[1] + self.box_corner_embed[1])
        if sparse:
            sparse_t = torch.stack(sparse).unsqueeze(0)
        else:
            sparse_t = torch.zeros(1, 0, self.dim, dtype=p.dtype)

        if mask is not None:
            if mask.shape != (self.mask_in_size, self.mask_in_size):
                mask = F.interpolate(
                    mask[None, None].to(p.dtype),
                    size=(self.mask_in_size, self.mask_in_size),
                    mode="bilinear",
                    align_corners=False,
                )[0, 0]
            dense = self.mask_down(mask[None, None].to(p.dtype))
        else:
            dense = self.no_mask_embed.reshape(1, -1, 1, 1).expand(
                1, self.dim, self.grid, self.grid
            )
        return sparse_t, dense


class DecoderRound(nn.Module):
    """Pre-norm round: the grid keeps an identity path so prompt- and
    adapter-driven embedding changes reach the upsampler unnormalized."""

    def __init__(self, dim, heads=1):
        super().__init__()
        self.token_self = Attention(dim, heads)
        self.token_norm = nn.LayerNorm(dim)
        self.t2i = CrossAttention(dim, dim, dim, heads)
        self.t2i_norm = nn.LayerNorm(dim)
        self.i2t = CrossAttention(dim, dim, dim, heads)
        self.i2t_norm = nn.LayerNorm(dim)
        self.mlp = Mlp(dim)
        self.mlp_norm = nn.LayerNorm(dim)

    def forward(self, tokens, src):
        tokens = tokens + self.token_self(self.token_norm(tokens))
        tokens = tokens + self.t2i(self.t2i_norm(tokens), src)
        tokens = tokens + self.mlp(self.mlp_norm(tokens))
        src = src + self.i2t(self.i2t_norm(src), tokens)
        return tokens, src


class MaskDecoder(nn.Module):
    """Two cross-attention rounds between tokens and the embedding grid,
    then a transposed-conv upsampler back to encoder input resolution."""

    def __init__(self, dim, grid, input_size, heads=1):
        super().__init__()
        if input_size != grid * 16:
            raise ValueError("decoder upsampler assumes a 16x patch stride")
        self.dim = dim
        self.grid = grid
        self.input_size = input_size
        self.logit_gain = 8.0  # confident masks reachable, sigmoid not saturated
        self.output_token = nn.Parameter(torch.zeros(dim))
        self.rounds = nn.ModuleList(DecoderRound(dim, heads) for _ in range(2))
        out_ch = max(dim // 4, 1)
        self.upsample = nn.Sequential(
            nn.ConvTranspose2d(
                dim, max(dim // 2, 1), kernel_size=8, stride=4, padding=2
            ),
            nn.GELU(),
            nn.ConvTranspose2d(
                max(dim // 2, 1), out_ch, kernel_size=8, stride=4, padding=2
            ),
        )
        self.token_head = nn.Sequential(
            nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, out_ch)
        )
        self.register_buffer(
            "grid_pos", sinusoidal_grid_pe(grid, grid, dim).unsqueeze(0)
        )

    def structure_upsampler(self, seed: int):
        """Re-initialize the transposed-conv kernels as a bilinear tent times
        a random channel mix. Random dense kernels are spatially white and
        cannot express smooth masks; the tent factorization makes every
        upsampler output a smooth interpolation of the grid features while
        keeping the channel mixing random."""
        g = torch.Generator().manual_seed(seed)
        taps = 1.0 - (torch.arange(8, dtype=torch.float32) - 3.5).abs() / 4.0
        tent = taps[:, None] * taps[None, :]  # partition of unity at stride 4
        for layer in self.upsample:
            if isinstance(layer, nn.ConvTranspose2d):
                cin, cout = layer.in_channels, layer.out_channels
                mix = torch.randn(cin, cout, generator=g) / math.sqrt(cin)
                with torch.no_grad():
                    layer.weight.copy_(mix[:, :, None, None] * tent)
                    layer.bias.zero_()

    def forward(self, img_emb, sparse, dense):
        b, c, g, _ = img_emb.shape
        if c != self.dim or sparse.shape[-1] != self.dim:
            raise ValueError(
                f"channel mismatch: embedding {c}, sparse {sparse.shape[-1]}, "
                f"decoder {self.dim}"
            )
        if dense.shape[1] != self.dim or dense.shape[-2:] != (g, g):
            raise ValueError("dense prompt does not match the embedding grid")
        src = (img_emb + dense).flatten(2).transpose(1, 2) + self.grid_pos
        tokens = torch.cat(
            [self.output_token.expand(b, 1, -1).to(sparse.dtype), sparse], dim=1
        )
        for rnd in self.rounds:
            tokens, src = rnd(tokens, src)
        feat = src.transpose(1, 2).reshape(b, c, g, g)
        up = self.upsample(feat)  # [b, out_ch, S, S]
        w = self.token_head(tokens[:, 0])  # [b, out_ch]
        # cosine form keeps the frozen random stack well-conditioned: logits
        # live in [-gain, gain] regardless of the embedding magnitude
        up = F.normalize(up, dim=1)
        w = F.normalize(w, dim=1)
        logits = torch.einsum("bchw,bc->bhw", up, w) * self.logit_gain
        return torch.sigmoid(logits)


class SemanticPyramidEncoder(nn.Module):
    """Frozen 4-stage convolutional hierarchy: stride-4 stem, then three
    stride-2 stages, spatial size halving per level."""

    def __init__(self, input_size, widths):
        super().__init__()
        if len(widths) != 4:
            raise ValueError("pyramid needs exactly 4 stage widths")
        self.input_size = input_size
        self.widths = tuple(widths)
        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], kernel_size=4, stride=4),
            nn.GELU(),
            nn.Conv2d(widths[0], widths[0], kernel_size=3, padding=1),
        )
        self.stages = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(widths[i], widths[i + 1], kernel_size=3, stride=2, padding=1),
                nn.GELU(),
                nn.Conv2d(widths[i + 1], widths[i + 1], kernel_size=3, padding=1),
            )
            for i in range(3)
        )

    def forward(self, img):
        if img.shape[-1] != self.input_size or img.shape[-2] != self.input_size:
            raise ValueError(
                f"semantic encoder expects {self.input_size}x{self.input_size}, "
                f"got {tuple(img.shape[-2:])}"
            )
        levels = [self.stem(img)]
        for stage in self.stages:
            levels.append(stage(levels[-1]))
        return levels


class Foundation(nn.Module):
    """Bundle of the four frozen components with a shared parameter policy."""

    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.image_encoder = ImageEncoder(
            cfg.sam_input_size, cfg.patch_size, cfg.encoder_dim,
            cfg.encoder_blocks, cfg.attn_heads,
        )
        self.prompt_encoder = PromptEncoder(
            cfg.encoder_dim, self.image_encoder.grid, cfg.sam_input_size
        )
        self.mask_decoder = MaskDecoder(
            cfg.encoder_dim, self.image_encoder.grid, cfg.sam_input_size,
            cfg.attn_heads,
        )
        self.semantic_encoder = SemanticPyramidEncoder(
            cfg.mcfm_input_size, cfg.pyramid_widths
        )
        seeded_init(self, FOUNDATION_SEED)
        self.mask_decoder.structure_upsampler(FOUNDATION_SEED + 1)
        self.requires_grad_(False)


# Pretrained-weights support: our encoder blocks are structurally plain ViT
# (pre-norm attention + MLP), so the subset of a released ViT-B checkpoint
# that matches can be ingested through this name map. Windowing and relative
# position tables have no counterpart and are skipped.
_VIT_KEY_MAP = {
    "patch_embed.proj.weight": "patch_embed.weight",
    "patch_embed.proj.bias": "patch_embed.bias",
    "blocks.{i}.norm1.weight": "blocks.{i}.norm1.weight",
    "blocks.{i}.norm1.bias": "blocks.{i}.norm1.bias",
    "blocks.{i}.attn.qkv.weight": "blocks.{i}.attn.qkv.weight",
    "blocks.{i}.attn.qkv.bias": "blocks.{i}.attn.qkv.bias",
    "blocks.{i}.attn.proj.weight": "blocks.{i}.attn.proj.weight",
    "blocks.{i}.attn.proj.bias": "blocks.{i}.attn.proj.bias",
    "blocks.{i}.norm2.weight": "blocks.{i}.norm2.weight",
    "blocks.{i}.norm2.bias": "blocks.{i}.norm2.bias",
    "blocks.{i}.mlp.lin1.weight": "blocks.{i}.mlp.fc1.weight",
    "blocks.{i}.mlp.lin1.bias": "blocks.{i}.mlp.fc1.bias",
    "blocks.{i}.mlp.lin2.weight": "blocks.{i}.mlp.fc2.weight",
    "blocks.{i}.mlp.lin2.bias": "blocks.{i}.mlp.fc2.bias",
}


def load_pretrained_image_encoder(foundation: Foundation, weights_path):
    """Load name-mapped ViT weights into the frozen image encoder."""
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    if "model" in state:
        state = state["model"]
    state = {k.removeprefix("image_encoder."): v for k, v in state.items()}
    enc = foundation.image_encoder
    target = enc.state_dict()
    depth = len(enc.blocks)
    loaded = 0
    for i in range(depth):
        for src_t, dst_t in _VIT_KEY_MAP.items():
            src, dst = src_t.format(i=i), dst_t.format(i=i)
            if "{i}" in src_t and src not in state:
                raise KeyError(f"pretrained checkpoint missing key {src}")
            if src in state:
                if state[src].shape != target[dst].shape:
                    raise ValueError(
                        f"shape mismatch for {src}: checkpoint "
                        f"{tuple(state[src].shape)} vs model {tuple(target[dst].shape)}"
                    )
                target[dst] = state[src]
                loaded += 1
    enc.load_state_dict(target)
    return loaded


def build_foundation(cfg: RunConfig, weights_path=None) -> Foundation:
    foundation = Foundation(cfg)
    if cfg.backend == "pretrained":
        if weights_path is None:
            raise ValueError("backend 'pretrained' requires a weights file")
        load_pretrained_image_encoder(foundation, weights_path)
        foundation.requires_grad_(False)
    return foundation
