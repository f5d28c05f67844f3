"""Automatic prompt generation: learnable-query semantic prompts from f_sem,
and geometric prompts (mask, box, points) extracted from the coarse saliency
map with no human input."""

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
from scipy import ndimage

from .foundation import Attention, CrossAttention

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int64)


@dataclass
class GeometricPrompts:
    """Prompts derived from one coarse saliency map.

    `boxes` and `points` are in coarse-map pixel coordinates with inclusive
    box corners (x_min, y_min, x_max, y_max); they are rescaled and converted
    to non-degenerate pixel-edge boxes when fed to the prompt encoder.
    """

    mask: np.ndarray                 # raw (un-binarized) coarse map
    boxes: list = field(default_factory=list)
    points: list = field(default_factory=list)  # [((x, y), label)], label 1

    def to_encoder_space(self, image_size: int):
        """Rescale to encoder-input pixel coordinates."""
        h, w = self.mask.shape
        sx, sy = image_size / w, image_size / h
        boxes = [
            (x0 * sx, y0 * sy, (x1 + 1) * sx, (y1 + 1) * sy)
            for (x0, y0, x1, y1) in self.boxes
        ]
        points = [(((x + 0.5) * sx, (y + 0.5) * sy), lab) for ((x, y), lab) in self.points]
        return boxes, points

    def to_json_dict(self):
        return {
            "boxes": [list(map(float, b)) for b in self.boxes],
            "points": [
                {"xy": [float(x), float(y)], "label": int(lab)}
                for ((x, y), lab) in self.points
            ],
        }


def derive_geometric(
    coarse: np.ndarray,
    threshold: float = 0.5,
    max_points: int = 3,
    min_area_frac: float = 0.001,
    per_component_boxes: bool = False,
) -> GeometricPrompts:
    """Extract box/point prompts from a coarse saliency map in [0,1].

    Binarize at `threshold`, keep 4-connected components with at least
    `min_area_frac` of the pixels, take the tight bounding box of their union
    (or one box per component), and one point per component at its integer
    centroid, snapped to the nearest component pixel if the centroid falls
    outside; points are capped at `max_points` by descending area. An empty
    foreground falls back to the global argmax pixel and no box.
    """
    coarse = np.asarray(coarse, dtype=np.float64)
    h, w = coarse.shape
    binary = coarse > threshold
    labels, n = ndimage.label(binary, structure=FOUR_CONNECTED)
    min_area = min_area_frac * h * w
    comps = []
    for lab in range(1, n + 1):
        ys, xs = np.nonzero(labels == lab)
        if len(ys) >= min_area:
            comps.append((ys, xs))
    if not comps:
        flat = int(np.argmax(coarse))
        point = ((flat % w, flat // w), 1)
        return GeometricPrompts(mask=coarse, boxes=[], points=[point])

    comps.sort(key=lambda c: -len(c[0]))
    if per_component_boxes:
        boxes = [
            (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
            for ys, xs in comps
        ]
    else:
        all_ys = np.concatenate([ys for ys, _ in comps])
        all_xs = np.concatenate([xs for _, xs in comps])
        boxes = [
            (int(all_xs.min()), int(all_ys.min()), int(all_xs.max()), int(all_ys.max()))
        ]
    points = []
    for ys, xs in comps[:max_points]:
        cx, cy = xs.mean(), ys.mean()
        px, py = int(cx), int(cy)
        if not binary[py, px] or labels[py, px] != labels[ys[0], xs[0]]:
            d2 = (ys - cy) ** 2 + (xs - cx) ** 2
            i = int(np.argmin(d2))
            px, py = int(xs[i]), int(ys[i])
        points.append(((px, py), 1))
    return GeometricPrompts(mask=coarse, boxes=boxes, points=points)


class PromptGenerator(nn.Module):
    """N learnable queries attend to the flattened f_sem (cross-attention),
    interact among themselves (self-attention), and are projected to the
    decoder token width. No positional encoding: the queries are a set."""

    def __init__(self, sem_channels, query_dim, out_dim, num_queries, heads=1):
        super().__init__()
        self.num_queries = num_queries
        self.proj_in = nn.Conv2d(sem_channels, query_dim, kernel_size=1)
        self.queries = nn.Parameter(torch.randn(num_queries, query_dim) * 0.02)
        self.cross = CrossAttention(query_dim, query_dim, query_dim, heads)
        self.self_attn = Attention(query_dim, heads)
        self.proj_out = nn.Linear(query_dim, out_dim)

    def forward(self, f_sem):
        b = f_sem.shape[0]
        if self.num_queries == 0:
            out_dim = self.proj_out.out_features
            return torch.zeros(b, 0, out_dim, dtype=f_sem.dtype, device=f_sem.device)
        q_sem = self.proj_in(f_sem).flatten(2).transpose(1, 2)  # [b, hw, cq]
        q = self.queries.unsqueeze(0).expand(b, -1, -1)
        q = q + self.cross(q, q_sem)
        q = q + self.self_attn(q)
        return self.proj_out(q)  # [b, N, out_dim]


def assemble_decoder_inputs(p_sem, geo, prompt_encoder):
    """Concatenate geometric and semantic sparse tokens; dense = mask prompt.

    `p_sem` is [1, N, c] (N may be 0); `geo` may be None (geometric ablation),
    in which case only the no-mask dense embedding is used.
    """
    if geo is not None:
        boxes, points = geo.to_encoder_space(prompt_encoder.input_size)
        mask = torch.as_tensor(geo.mask, dtype=p_sem.dtype)
        sparse_geo, dense = prompt_encoder(points=points, boxes=boxes, mask=mask)
    else:
        sparse_geo, dense = prompt_encoder()
    if p_sem.shape[-1] != prompt_encoder.dim:
        raise ValueError(
            f"semantic prompt width {p_sem.shape[-1]} does not match the "
            f"prompt embedding width {prompt_encoder.dim}"
        )
    sparse = torch.cat([sparse_geo.to(p_sem.dtype), p_sem], dim=1)
    return sparse, dense
