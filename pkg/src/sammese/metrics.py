"""SOD evaluation metrics: MAE, max F-measure, S-measure, max E-measure.

Conventions (the dominant ones in the SOD evaluation toolboxes): beta^2 =
0.3, 256 uniform thresholds with 8-bit quantized maps, max-F/max-E reported
(mean variants emitted alongside). Degenerate ground truths follow the
published fallbacks: all-background S = 1 - mean(pred), all-background /
all-foreground E uses 1-pred / pred as the enhanced matrix, and F is 0 for
an empty ground truth (flagged per image).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_EPS = np.spacing(1)
N_THRESHOLDS = 256


def _validate_pair(m, g):
    m = np.asarray(m, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if m.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {m.shape} vs gt {g.shape}")
    if m.min() < 0 or m.max() > 1:
        raise ValueError("prediction values must lie in [0, 1]")
    if not np.isin(g, (0.0, 1.0)).all():
        raise ValueError("ground truth must be binary")
    return m, g > 0.5


def _quantize(m):
    return np.round(m * 255.0) / 255.0


def _thresholds():
    return np.arange(N_THRESHOLDS) / 255.0


def mae(m, g) -> float:
    m, gb = _validate_pair(m, g)
    return float(np.abs(m - gb).mean())


def f_measure_curve(m, g, beta_sq: float = 0.3):
    """Per-threshold F scores over the 256 uniform thresholds."""
    m, gb = _validate_pair(m, g)
    if gb.sum() == 0:
        return np.zeros(N_THRESHOLDS)
    mq = _quantize(m)
    scores = np.zeros(N_THRESHOLDS)
    n_gt = gb.sum()
    for i, t in enumerate(_thresholds()):
        pred = mq >= t
        tp = np.logical_and(pred, gb).sum()
        if tp == 0:
            continue
        precision = tp / pred.sum()
        recall = tp / n_gt
        scores[i] = (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)
    return scores


def f_measure(m, g, beta_sq: float = 0.3) -> float:
    """Max F over thresholds; 0 for an empty ground truth."""
    return float(f_measure_curve(m, g, beta_sq).max())


def _object_score(values):
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(m, gb):
    u = gb.mean()
    fg = _object_score(m[gb])
    bg = _object_score((1.0 - m)[~gb])
    return u * fg + (1.0 - u) * bg


def _split_index(coords, size):
    # pixel-center mean + 0.5 puts the split on pixel edges; banker's rounding
    # keeps the split mirror-symmetric on even-sized maps
    s = int(np.round(coords.mean() + 0.5))
    return min(max(s, 1), size - 1)


def _region_ssim(p, q):
    n = p.size
    x, y = p.mean(), q.mean()
    d = max(n - 1, 1)
    sigma_x = ((p - x) ** 2).sum() / d
    sigma_y = ((q - y) ** 2).sum() / d
    sigma_xy = ((p - x) * (q - y)).sum() / d
    a = 4.0 * x * y * sigma_xy
    b = (x * x + y * y) * (sigma_x + sigma_y)
    if a != 0.0:
        return a / (b + _EPS)
    return 1.0 if b == 0.0 else 0.0


def _s_region(m, gb):
    h, w = gb.shape
    ys, xs = np.nonzero(gb)
    cy = _split_index(ys, h)
    cx = _split_index(xs, w)
    total = h * w
    score = 0.0
    for rs, cs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        gq = gb[rs, cs].astype(np.float64)
        score += (gq.size / total) * _region_ssim(m[rs, cs], gq)
    return score


def s_measure(m, g, alpha: float = 0.5) -> float:
    """Structure measure: alpha * object-aware + (1-alpha) * region-aware."""
    m, gb = _validate_pair(m, g)
    y = gb.mean()
    if y == 0.0:
        return float(1.0 - m.mean())
    if y == 1.0:
        return float(m.mean())
    score = alpha * _s_object(m, gb) + (1.0 - alpha) * _s_region(m, gb)
    return float(max(score, 0.0))


def e_measure_curve(m, g):
    """Per-threshold enhanced-alignment scores (mean of the enhanced matrix)."""
    m, gb = _validate_pair(m, g)
    mq = _quantize(m)
    g_all_bg = gb.sum() == 0
    g_all_fg = (~gb).sum() == 0
    dgt = gb.astype(np.float64) - gb.mean()
    scores = np.zeros(N_THRESHOLDS)
    for i, t in enumerate(_thresholds()):
        fm = (mq >= t).astype(np.float64)
        if g_all_bg:
            enhanced = 1.0 - fm
        elif g_all_fg:
            enhanced = fm
        else:
            dfm = fm - fm.mean()
            denom = dgt * dgt + dfm * dfm
            align = np.where(denom > 0, 2.0 * dgt * dfm / np.where(denom > 0, denom, 1.0), 1.0)
            enhanced = (align + 1.0) ** 2 / 4.0
        scores[i] = enhanced.mean()
    return scores


def e_measure(m, g) -> float:
    """Max enhanced-alignment measure over thresholds."""
    return float(e_measure_curve(m, g).max())


@dataclass
class EvalResult:
    mae: float
    f_beta_max: float
    s_measure: float
    e_measure_max: float
    f_beta_mean: float = 0.0
    e_measure_mean: float = 0.0
    per_image: list = field(default_factory=list)
    flagged: list = field(default_factory=list)  # ids with empty-GT F fallback


def evaluate_pair(m, g) -> dict:
    f_curve = f_measure_curve(m, g)
    e_curve = e_measure_curve(m, g)
    return {
        "mae": mae(m, g),
        "f_beta_max": float(f_curve.max()),
        "f_beta_mean": float(f_curve.mean()),
        "s_measure": s_measure(m, g),
        "e_measure_max": float(e_curve.max()),
        "e_measure_mean": float(e_curve.mean()),
    }


def _load_gray(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def evaluate_dataset(pred_dir, gt_dir, csv_path=None, table_path=None) -> EvalResult:
    """Pair predictions and GTs by basename and average per-image metrics."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gts = sorted(p for p in gt_dir.iterdir() if p.suffix.lower() == ".png")
    if not gts:
        raise FileNotFoundError(f"no ground-truth PNGs in {gt_dir}")
    rows = []
    flagged = []
    for gt_path in gts:
        pred_path = pred_dir / gt_path.name
        if not pred_path.exists():
            raise FileNotFoundError(f"missing prediction for {gt_path.stem!r}")
        g = (_load_gray(gt_path) >= 0.5).astype(np.float64)
        m = _load_gray(pred_path)
        if m.shape != g.shape:
            raise ValueError(f"{gt_path.stem!r}: prediction/gt size mismatch")
        scores = evaluate_pair(m, g)
        scores["id"] = gt_path.stem
        if g.sum() == 0:
            flagged.append(gt_path.stem)
        rows.append(scores)

    def mean_of(key):
        return float(np.mean([r[key] for r in rows]))

    result = EvalResult(
        mae=mean_of("mae"),
        f_beta_max=mean_of("f_beta_max"),
        s_measure=mean_of("s_measure"),
        e_measure_max=mean_of("e_measure_max"),
        f_beta_mean=mean_of("f_beta_mean"),
        e_measure_mean=mean_of("e_measure_mean"),
        per_image=rows,
        flagged=flagged,
    )
    if csv_path is not None:
        import csv as _csv

        keys = ["id", "mae", "f_beta_max", "f_beta_mean", "s_measure",
                "e_measure_max", "e_measure_mean"]
        with open(csv_path, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows({k: r[k] for k in keys} for r in rows)
    if table_path is not None:
        Path(table_path).write_text(format_table(result))
    return result


def format_table(result: EvalResult, label: str = "dataset") -> str:
    header = f"{'':12s} {'E_m':>7s} {'S_m':>7s} {'F_beta':>7s} {'MAE':>7s}"
    row = (
        f"{label:12s} {result.e_measure_max:7.3f} {result.s_measure:7.3f} "
        f"{result.f_beta_max:7.3f} {result.mae:7.3f}"
    )
    return header + "\n" + row + "\n"
