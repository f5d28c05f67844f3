"""Dual-supervised training loop, checkpointing, and prediction helpers."""

import csv
import math
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, config_hash
from .data import preprocess
from .losses import total_loss
from .model import Sammese, samples_to_tensors


def save_checkpoint(model: Sammese, path, epoch: int = 0):
    reg = model.registry()
    payload = {
        "params": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "manifest": {
            **reg.manifest(),
            "config_hash": config_hash(model.cfg),
        },
        "epoch": epoch,
    }
    torch.save(payload, path)


def load_checkpoint(model: Sammese, path):
    """Load parameters after verifying the manifest against the model config."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    manifest = payload["manifest"]
    if manifest["config_hash"] != config_hash(model.cfg):
        raise ValueError(
            f"checkpoint {path} was produced with a different architecture "
            f"configuration (hash {manifest['config_hash']})"
        )
    reg = model.registry()
    expected = reg.manifest()
    if manifest["frozen"] != expected["frozen"] or manifest["trainable"] != expected["trainable"]:
        raise ValueError(f"checkpoint {path} manifest does not match the model")
    model.load_state_dict(payload["params"])
    reg.enforce()
    return payload.get("epoch", 0)


def _check_finite(report, epoch, step):
    for name, value in zip(
        ("bce_main", "dice_main", "bce_coarse", "dice_coarse"), report.as_row()
    ):
        if not math.isfinite(value):
            raise RuntimeError(
                f"non-finite loss term {name}={value} at epoch {epoch} step {step}"
            )


def train(
    cfg: RunConfig,
    samples,
    max_steps=None,
    checkpoint_dir=None,
    log_path=None,
    model: Sammese = None,
    progress=None,
):
    """Train on SamplePairs; returns (model, list of per-step LossReport).

    Deterministic under cfg.seed; only registry-trainable parameters are
    optimized (AdamW, constant learning rate); checkpoints per epoch.
    """
    torch.manual_seed(cfg.seed)
    if model is None:
        model = Sammese(cfg)
    reg = model.registry()
    reg.enforce()
    optimizer = torch.optim.AdamW(
        [p for p in reg.trainable.values()],
        lr=cfg.learning_rate,
        betas=(0.9, 0.999),
        weight_decay=cfg.weight_decay,
    )
    pre = [preprocess(s, cfg) for s in samples]
    order_rng = np.random.default_rng(cfg.seed)

    log_file = writer = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(
            ["epoch", "step", "bce_main", "dice_main", "bce_coarse", "dice_coarse", "total"]
        )
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    history = []
    step = 0
    dtype = next(model.parameters()).dtype
    try:
        for epoch in range(cfg.epochs):
            idx = order_rng.permutation(len(pre))
            for start in range(0, len(pre), cfg.batch_size):
                batch = [pre[i] for i in idx[start : start + cfg.batch_size]]
                rgb_l, rgb_s, aux_s, gt = samples_to_tensors(batch, dtype=dtype)
                out = model(rgb_l, rgb_s, aux_s)
                loss, report = total_loss(out["m_sal"], out["m_sal_coarse"], gt)
                _check_finite(report, epoch, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                history.append(report)
                if writer is not None:
                    writer.writerow([epoch, step] + [f"{v:.6f}" for v in report.as_row()])
                step += 1
                if max_steps is not None and step >= max_steps:
                    raise StopIteration
            if checkpoint_dir is not None:
                save_checkpoint(model, checkpoint_dir / f"epoch_{epoch:04d}.pt", epoch)
            if progress is not None:
                progress(epoch, history[-1])
    except StopIteration:
        pass
    finally:
        if log_file is not None:
            log_file.close()
    if checkpoint_dir is not None:
        save_checkpoint(model, checkpoint_dir / "final.pt", cfg.epochs)
    return model, history


def predict(model: Sammese, samples):
    """Run inference; yields (id, m_sal, m_sal_coarse, geo) with numpy maps."""
    dtype = next(model.parameters()).dtype
    results = []
    with torch.no_grad():
        for s in samples:
            p = preprocess(s, model.cfg)
            rgb_l, rgb_s, aux_s, _ = samples_to_tensors([p], dtype=dtype)
            out = model(rgb_l, rgb_s, aux_s)
            results.append(
                (
                    s.id,
                    out["m_sal"][0].cpu().numpy(),
                    out["m_sal_coarse"][0].cpu().numpy(),
                    out["geo"][0],
                )
            )
    return results
