"""BCE + Dice supervision applied to both the main and coarse saliency maps."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

BCE_EPS = 1e-7
DICE_SMOOTH = 1.0


@dataclass
class LossReport:
    bce_main: float
    dice_main: float
    bce_coarse: float
    dice_coarse: float
    total: float

    def as_row(self):
        return [self.bce_main, self.dice_main, self.bce_coarse, self.dice_coarse, self.total]


def _align_gt(m: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Nearest-neighbor resize of the binary target to the prediction grid."""
    if g.shape == m.shape:
        return g
    if m.dim() == 2 and g.dim() == 2:
        return F.interpolate(g[None, None], size=m.shape, mode="nearest")[0, 0]
    if m.dim() == 3 and g.dim() == 3 and g.shape[0] == m.shape[0]:
        return F.interpolate(g.unsqueeze(1), size=m.shape[-2:], mode="nearest")[:, 0]
    raise ValueError(
        f"shape mismatch: prediction {tuple(m.shape)} vs gt {tuple(g.shape)}"
    )


def bce_loss(m: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    g = _align_gt(m, g.to(m.dtype))
    mc = m.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(g * torch.log(mc) + (1.0 - g) * torch.log(1.0 - mc)).mean()


def dice_loss(m: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """1 - (2*|M*G| + s) / (|M| + |G| + s), smoothing s = 1."""
    g = _align_gt(m, g.to(m.dtype))
    inter = (m * g).sum()
    return 1.0 - (2.0 * inter + DICE_SMOOTH) / (m.sum() + g.sum() + DICE_SMOOTH)


def total_loss(m_sal: torch.Tensor, m_sal_coarse: torch.Tensor, g: torch.Tensor):
    """Equal-weight BCE+Dice on both predictions; returns (tensor, LossReport)."""
    bce_m = bce_loss(m_sal, g)
    dice_m = dice_loss(m_sal, g)
    bce_c = bce_loss(m_sal_coarse, g)
    dice_c = dice_loss(m_sal_coarse, g)
    total = bce_m + dice_m + bce_c + dice_c
    report = LossReport(
        bce_main=bce_m.item(), dice_main=dice_m.item(),
        bce_coarse=bce_c.item(), dice_coarse=dice_c.item(), total=total.item(),
    )
    return total, report
