"""Run configuration: dataclass, flat key=value config files, CLI overrides."""

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RunConfig:
    # resolutions
    sam_input_size: int = 1024
    mcfm_input_size: int = 384
    patch_size: int = 16

    # stub backbone geometry
    encoder_blocks: int = 12
    encoder_dim: int = 768
    pyramid_widths: tuple = (128, 256, 512, 1024)
    backend: str = "stub"  # stub | pretrained

    # architecture knobs
    num_queries: int = 30
    bottleneck_dim: int = 0  # 0 -> encoder_dim // 4
    attn_heads: int = 1

    # optimization
    learning_rate: float = 1e-5
    batch_size: int = 2
    epochs: int = 100
    weight_decay: float = 1e-2
    seed: int = 0

    # data
    dataset_root: str = ""
    modality: str = "thermal"  # thermal | depth
    norm_mean: tuple = (0.5, 0.5, 0.5)
    norm_std: tuple = (0.5, 0.5, 0.5)

    # geometric prompt extraction
    mask_threshold: float = 0.5
    max_points: int = 3
    min_area_frac: float = 0.001
    per_component_boxes: bool = False

    # ablation switches
    no_mcfm: bool = False
    mcfm_complex_design: bool = False
    madapter_variant: str = "full"  # full | none | sum | fx | fsem
    no_semantic: bool = False
    no_geometric: bool = False

    # io
    checkpoint_path: str = "checkpoints"
    out_dir: str = "out"

    def __post_init__(self):
        if self.num_queries < 0:
            raise ValueError("num_queries must be >= 0")
        if self.bottleneck_dim == 0:
            self.bottleneck_dim = max(1, self.encoder_dim // 4)
        if self.bottleneck_dim < 1:
            raise ValueError("bottleneck_dim must be >= 1")
        if self.sam_input_size % self.patch_size != 0:
            raise ValueError(
                f"sam_input_size {self.sam_input_size} not divisible by "
                f"patch_size {self.patch_size}"
            )
        if self.mcfm_input_size % 32 != 0:
            raise ValueError(
                f"mcfm_input_size {self.mcfm_input_size} must be divisible by 32 "
                "(stem stride 4 and three stride-2 stages)"
            )
        if self.madapter_variant not in ("full", "none", "sum", "fx", "fsem"):
            raise ValueError(f"unknown madapter_variant {self.madapter_variant!r}")
        if self.backend not in ("stub", "pretrained"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.modality not in ("thermal", "depth"):
            raise ValueError(f"unknown modality {self.modality!r}")

    @property
    def embed_grid(self) -> int:
        return self.sam_input_size // self.patch_size

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


def toy_config(**overrides) -> RunConfig:
    """Small stub configuration used by tests and desk-scale runs."""
    base = dict(
        sam_input_size=64,
        mcfm_input_size=64,
        encoder_blocks=2,
        encoder_dim=32,
        pyramid_widths=(16, 32, 64, 128),
        learning_rate=1e-3,
        epochs=5,
    )
    base.update(overrides)
    return RunConfig(**base)


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(name: str, raw: str):
    f = _FIELD_TYPES.get(name)
    if f is None:
        raise KeyError(f"unknown config key {name!r}")
    raw = raw.strip()
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("bool", bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean {raw!r} for {name}")
    if f.type in ("tuple", tuple):
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        vals = []
        for p in parts:
            p = p.strip()
            vals.append(float(p) if "." in p or "e" in p.lower() else int(p))
        return tuple(vals)
    return raw


def load_config_file(path) -> dict:
    """Parse a flat `key = value` file with `#` comments into an override dict."""
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        overrides[key] = _parse_value(key, raw)
    return overrides


def build_config(config_file=None, **cli_overrides) -> RunConfig:
    """File values first, CLI flags on top."""
    overrides = load_config_file(config_file) if config_file else {}
    overrides.update({k: v for k, v in cli_overrides.items() if v is not None})
    return RunConfig(**overrides)


def config_hash(cfg: RunConfig) -> str:
    """Stable hash of the architecture-relevant fields, stored in checkpoints."""
    arch_keys = (
        "sam_input_size", "mcfm_input_size", "patch_size", "encoder_blocks",
        "encoder_dim", "pyramid_widths", "backend", "num_queries",
        "bottleneck_dim", "attn_heads", "no_mcfm", "mcfm_complex_design",
        "madapter_variant", "no_semantic", "no_geometric",
    )
    d = dataclasses.asdict(cfg)
    blob = ";".join(f"{k}={d[k]}" for k in arch_keys)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
