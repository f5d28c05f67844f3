"""Paired multi-modal image loading, preprocessing, and synthetic data."""

import numpy as np
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .config import RunConfig

IMAGE_EXTS = (".png", ".jpg", ".jpeg")


@dataclass
class SamplePair:
    """One aligned rgb/aux/ground-truth triple in [0,1] arrays."""

    rgb: np.ndarray   # [3, H, W]
    aux: np.ndarray   # [3, H, W] (single-channel sources replicated)
    gt: np.ndarray    # [H, W] in {0, 1}
    id: str

    def validate(self):
        if self.rgb.shape[0] != 3 or self.aux.shape[0] != 3:
            raise ValueError(f"sample {self.id}: expected 3-channel rgb/aux")
        if self.rgb.shape[1:] != self.gt.shape or self.aux.shape[1:] != self.gt.shape:
            raise ValueError(
                f"sample {self.id}: shape mismatch rgb {self.rgb.shape} "
                f"aux {self.aux.shape} gt {self.gt.shape}"
            )
        for name, arr in (("rgb", self.rgb), ("aux", self.aux), ("gt", self.gt)):
            if not np.isfinite(arr).all():
                raise ValueError(f"sample {self.id}: non-finite values in {name}")
        if not np.isin(self.gt, (0.0, 1.0)).all():
            raise ValueError(f"sample {self.id}: gt is not binary")


@dataclass
class PreprocessedSample:
    rgb_large: np.ndarray  # [3, S, S]
    rgb_small: np.ndarray  # [3, s, s]
    aux_small: np.ndarray  # [3, s, s]
    gt_large: np.ndarray   # [S, S] in {0, 1}
    norm_mean: tuple
    norm_std: tuple
    id: str = ""


def _read_image(path: Path) -> np.ndarray:
    """Load PNG/JPEG as float [C, H, W] in [0,1]."""
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)[:3]
    return arr


def _index_dir(d: Path) -> dict:
    return {
        p.stem: p
        for p in sorted(d.iterdir())
        if p.suffix.lower() in IMAGE_EXTS
    }


def index_dataset(root, modality: str = "thermal"):
    """List sample ids and per-directory paths; raises on orphan files."""
    root = Path(root)
    aux_name = "T" if modality == "thermal" else "Depth"
    dirs = {"RGB": root / "RGB", aux_name: root / aux_name, "GT": root / "GT"}
    for name, d in dirs.items():
        if not d.is_dir():
            raise FileNotFoundError(f"missing dataset subdirectory {d}")
    indexed = {name: _index_dir(d) for name, d in dirs.items()}
    all_ids = sorted(set().union(*[set(ix) for ix in indexed.values()]))
    for sid in all_ids:
        missing = [name for name, ix in indexed.items() if sid not in ix]
        if missing:
            raise FileNotFoundError(
                f"sample {sid!r}: missing counterpart in {', '.join(missing)}"
            )
    return all_ids, aux_name, indexed


def load_sample(indexed, aux_name, sid) -> "SamplePair":
    """Load and validate one triple; raises on size mismatch or bad pixels."""
    rgb = _read_image(indexed["RGB"][sid])
    aux = _read_image(indexed[aux_name][sid])
    gt = _read_image(indexed["GT"][sid])[0]
    if rgb.shape[0] == 1:
        rgb = np.repeat(rgb, 3, axis=0)
    if aux.shape[0] == 1:
        aux = np.repeat(aux, 3, axis=0)
    if rgb.shape[1:] != gt.shape or aux.shape[1:] != gt.shape:
        raise ValueError(
            f"sample {sid!r}: size mismatch rgb {rgb.shape[1:]} "
            f"aux {aux.shape[1:]} gt {gt.shape}"
        )
    sample = SamplePair(rgb=rgb, aux=aux, gt=(gt >= 0.5).astype(np.float64), id=sid)
    sample.validate()
    return sample


def load_dataset(root, modality: str = "thermal"):
    """Load matched triples from `root/{RGB, T|Depth, GT}` subdirectories.

    Raises on orphan files (a basename present in one directory but not the
    others) and on size mismatches within a triple; GT is never silently
    resized against its RGB image.
    """
    all_ids, aux_name, indexed = index_dataset(root, modality)
    return [load_sample(indexed, aux_name, sid) for sid in all_ids]


def _resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of a [C, H, W] array via PIL."""
    chans = [
        np.asarray(
            Image.fromarray(c.astype(np.float32), mode="F").resize(
                (size, size), Image.BILINEAR
            ),
            dtype=np.float64,
        )
        for c in img
    ]
    return np.stack(chans)


def resize_nearest(mask: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor resize of a [H, W] mask (label-preserving)."""
    h, w = mask.shape
    rows = (np.arange(size) * h / size).astype(np.int64).clip(0, h - 1)
    cols = (np.arange(size) * w / size).astype(np.int64).clip(0, w - 1)
    return mask[np.ix_(rows, cols)]


def preprocess(sample: SamplePair, cfg: RunConfig) -> PreprocessedSample:
    """Resize to the two working resolutions and normalize per channel."""
    for name, arr in (("rgb", sample.rgb), ("aux", sample.aux), ("gt", sample.gt)):
        if not np.isfinite(arr).all():
            raise ValueError(f"sample {sample.id}: non-finite values in {name}")
    mean = np.asarray(cfg.norm_mean, dtype=np.float64)[:, None, None]
    std = np.asarray(cfg.norm_std, dtype=np.float64)[:, None, None]

    def norm(img):
        return (img - mean) / std

    return PreprocessedSample(
        rgb_large=norm(_resize_bilinear(sample.rgb, cfg.sam_input_size)),
        rgb_small=norm(_resize_bilinear(sample.rgb, cfg.mcfm_input_size)),
        aux_small=norm(_resize_bilinear(sample.aux, cfg.mcfm_input_size)),
        gt_large=resize_nearest(sample.gt, cfg.sam_input_size),
        norm_mean=tuple(cfg.norm_mean),
        norm_std=tuple(cfg.norm_std),
        id=sample.id,
    )


def make_synthetic_dataset(n: int, size: int, seed: int, corruption: str = "none"):
    """Render random rectangles/ellipses into consistent rgb/aux/gt triples.

    Deterministic under (n, size, seed, corruption). `corruption` emulates
    hard scenes: "rgb_dark" dims the rgb image while aux keeps contrast,
    "aux_noise" degrades the aux modality instead.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if size < 32:
        raise ValueError("size must be >= 32")
    if corruption not in ("none", "rgb_dark", "aux_noise"):
        raise ValueError(f"unknown corruption mode {corruption!r}")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size]
    samples = []
    for i in range(n):
        # one large shape, side 40-70% of the image, away from borders
        side_h = int(rng.integers(int(0.4 * size), int(0.7 * size)))
        side_w = int(rng.integers(int(0.4 * size), int(0.7 * size)))
        top = int(rng.integers(2, size - side_h - 2))
        left = int(rng.integers(2, size - side_w - 2))
        if rng.random() < 0.5:
            shape = (
                (ys >= top) & (ys < top + side_h) & (xs >= left) & (xs < left + side_w)
            )
        else:
            cy, cx = top + side_h / 2, left + side_w / 2
            shape = ((ys - cy) / (side_h / 2)) ** 2 + ((xs - cx) / (side_w / 2)) ** 2 <= 1.0
        gt = shape.astype(np.float64)

        fg_color = rng.uniform(0.6, 0.9, size=3)
        bg_color = rng.uniform(0.1, 0.35, size=3)
        rgb = np.where(shape[None], fg_color[:, None, None], bg_color[:, None, None])
        rgb = rgb + rng.normal(0.0, 0.02, size=rgb.shape)
        aux1 = np.where(shape, 0.85, 0.15) + rng.normal(0.0, 0.02, size=(size, size))

        if corruption == "rgb_dark":
            rgb = rgb * 0.12
        elif corruption == "aux_noise":
            aux1 = 0.5 + rng.normal(0.0, 0.05, size=(size, size))

        rgb = rgb.clip(0.0, 1.0)
        aux = np.repeat(aux1.clip(0.0, 1.0)[None], 3, axis=0)
        sample = SamplePair(rgb=rgb, aux=aux, gt=gt, id=f"synth_{i:04d}")
        sample.validate()
        samples.append(sample)
    return samples


def save_mask_png(mask: np.ndarray, path):
    """Write a [H, W] map in [0,1] as an 8-bit grayscale PNG."""
    arr = np.round(np.clip(mask, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_dataset(samples, root, modality: str = "thermal"):
    """Materialize SamplePairs to the RGB/T|Depth/GT on-disk layout."""
    root = Path(root)
    aux_name = "T" if modality == "thermal" else "Depth"
    for sub in ("RGB", aux_name, "GT"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        rgb8 = np.round(s.rgb * 255.0).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(rgb8, mode="RGB").save(root / "RGB" / f"{s.id}.png")
        save_mask_png(s.aux[0], root / aux_name / f"{s.id}.png")
        save_mask_png(s.gt, root / "GT" / f"{s.id}.png")
