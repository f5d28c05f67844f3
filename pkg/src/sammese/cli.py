"""Command-line entry points: train, predict, eval, ablate, synth-data."""

import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import metrics as metrics_mod
from .config import build_config
from .data import (
    index_dataset,
    load_dataset,
    load_sample,
    make_synthetic_dataset,
    resize_nearest,
    save_mask_png,
    write_dataset,
)
from .model import Sammese
from .training import load_checkpoint, predict as run_predict, save_checkpoint, train as run_train

ABLATE_SWITCHES = {
    "no-mcfm": {"no_mcfm": True},
    "cd": {"mcfm_complex_design": True},
    "no-madapter": {"madapter_variant": "none"},
    "no-fusion": {"madapter_variant": "sum"},
    "adapter-fx": {"madapter_variant": "fx"},
    "adapter-fsem": {"madapter_variant": "fsem"},
    "no-semantic": {"no_semantic": True},
    "no-geometric": {"no_geometric": True},
}


@click.group()
def main():
    """Multi-modal salient object detection on a frozen promptable segmenter."""


def _load_samples(cfg, data, synthetic, synth_size):
    if data:
        return load_dataset(data, cfg.modality)
    if cfg.dataset_root:
        return load_dataset(cfg.dataset_root, cfg.modality)
    if synthetic:
        return make_synthetic_dataset(synthetic, synth_size, cfg.seed)
    raise click.UsageError("no dataset: pass --data/--synthetic or set dataset_root")


common_options = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--backend", type=click.Choice(["stub", "pretrained"]), default=None),
]


def add_options(opts):
    def wrap(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return wrap


@main.command()
@add_options(common_options)
@click.option("--data", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--synthetic", type=int, default=0, help="train on N synthetic pairs")
@click.option("--synth-size", type=int, default=64)
@click.option("--ckpt", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--ablate", type=click.Choice(sorted(ABLATE_SWITCHES)), default=None)
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
def train(config, seed, backend, data, synthetic, synth_size, ckpt, out, ablate, weights):
    """Train the learnable components; writes checkpoints and a CSV log."""
    overrides = {"seed": seed, "backend": backend}
    if ablate:
        overrides.update(ABLATE_SWITCHES[ablate])
    cfg = build_config(config, **overrides)
    samples = _load_samples(cfg, data, synthetic, synth_size)
    out_dir = Path(out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = Path(ckpt or cfg.checkpoint_path)

    torch.manual_seed(cfg.seed)
    model = Sammese(cfg, weights_path=weights)
    click.echo(f"learnable parameters: {model.learnable_parameter_count()}")

    def progress(epoch, report):
        click.echo(
            f"epoch {epoch:4d}  total {report.total:.4f}  "
            f"bce_main {report.bce_main:.4f}  dice_main {report.dice_main:.4f}  "
            f"bce_coarse {report.bce_coarse:.4f}  dice_coarse {report.dice_coarse:.4f}"
        )

    run_train(
        cfg, samples, model=model, checkpoint_dir=ckpt_dir,
        log_path=out_dir / "train_log.csv", progress=progress,
    )
    click.echo(f"checkpoints in {ckpt_dir}, log in {out_dir / 'train_log.csv'}")


@main.command()
@add_options(common_options)
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--dump-prompts", is_flag=True, default=False)
@click.option("--dump-coarse", is_flag=True, default=False)
def predict(config, seed, backend, ckpt, data, out, dump_prompts, dump_coarse):
    """Write 8-bit grayscale saliency PNGs for every pair in a dataset dir."""
    cfg = build_config(config, seed=seed, backend=backend)
    model = Sammese(cfg)
    load_checkpoint(model, ckpt)
    model.eval()
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_ids, aux_name, indexed = index_dataset(data, cfg.modality)
    failures = 0
    prompts_dump = {}
    for sid in all_ids:
        try:
            sample = load_sample(indexed, aux_name, sid)
            _, m_sal, coarse, geo = run_predict(model, [sample])[0]
            save_mask_png(m_sal, out_dir / f"{sid}.png")
            if dump_coarse:
                save_mask_png(coarse, out_dir / f"{sid}_coarse.png")
            if dump_prompts and geo is not None:
                prompts_dump[sid] = geo.to_json_dict()
        except Exception as exc:  # keep the batch going, fail at the end
            failures += 1
            click.echo(f"error on {sid}: {exc}", err=True)
    if dump_prompts:
        (out_dir / "prompts.json").write_text(json.dumps(prompts_dump, indent=2))
    if failures:
        raise click.ClickException(f"{failures} sample(s) failed")


@main.command(name="eval")
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
def eval_cmd(pred_dir, gt_dir, out):
    """Evaluate saliency PNGs against ground-truth PNGs (paired by basename)."""
    csv_path = table_path = None
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "metrics.csv"
        table_path = out_dir / "metrics.txt"
    try:
        result = metrics_mod.evaluate_dataset(pred_dir, gt_dir, csv_path, table_path)
    except (FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(metrics_mod.format_table(result))
    if result.flagged:
        click.echo(f"flagged (empty ground truth): {', '.join(result.flagged)}")


ABLATION_SUITES = {
    "mcfm": [("full", {}), ("w/o MCFM", {"no_mcfm": True}),
             ("w/ CD", {"mcfm_complex_design": True})],
    "madapter": [("full", {}), ("w/o Fusion", {"madapter_variant": "sum"}),
                 ("w/ Adapter_f_x", {"madapter_variant": "fx"}),
                 ("w/ Adapter_f_sem", {"madapter_variant": "fsem"})],
    "prompts": [("full", {}), ("w/o Semantic", {"no_semantic": True}),
                ("w/o Geometric", {"no_geometric": True})],
}


@main.command()
@add_options(common_options)
@click.option("--which", type=click.Choice(["mcfm", "madapter", "prompts", "queries"]),
              required=True)
@click.option("--values", default="1,10,30,50", help="query counts for --which queries")
@click.option("--data", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--synthetic", type=int, default=0)
@click.option("--synth-size", type=int, default=64)
def ablate(config, seed, backend, which, values, data, synthetic, synth_size):
    """Train each variant at toy scale and tabulate metrics side by side."""
    cfg = build_config(config, seed=seed, backend=backend)
    samples = _load_samples(cfg, data, synthetic, synth_size)
    if which == "queries":
        try:
            counts = [int(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise click.UsageError(f"--values must be comma-separated ints, got {values!r}")
        variants = [(f"N={n}", {"num_queries": n}) for n in counts]
    else:
        variants = ABLATION_SUITES[which]

    click.echo(f"{'variant':>18s} {'params':>10s} {'E_m':>7s} {'S_m':>7s} "
               f"{'F_beta':>7s} {'MAE':>7s}")
    for name, overrides in variants:
        vcfg = cfg.replace(**overrides)
        model, _ = run_train(vcfg, samples)
        model.eval()
        per = []
        for sample, (_, m_sal, _, _) in zip(samples, run_predict(model, samples)):
            gt = resize_nearest(sample.gt, m_sal.shape[0])
            per.append(metrics_mod.evaluate_pair(m_sal, gt))
        agg = {k: float(np.mean([p[k] for p in per])) for k in per[0]}
        click.echo(
            f"{name:>18s} {model.learnable_parameter_count():>10d} "
            f"{agg['e_measure_max']:7.3f} {agg['s_measure']:7.3f} "
            f"{agg['f_beta_max']:7.3f} {agg['mae']:7.3f}"
        )


@main.command(name="synth-data")
@click.option("--n", type=int, required=True)
@click.option("--size", type=int, default=64)
@click.option("--seed", type=int, default=0)
@click.option("--corruption", type=click.Choice(["none", "rgb_dark", "aux_noise"]),
              default="none")
@click.option("--modality", type=click.Choice(["thermal", "depth"]), default="thermal")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def synth_data(n, size, seed, corruption, modality, out):
    """Generate a synthetic desk-scale dataset in the RGB/T|Depth/GT layout."""
    samples = make_synthetic_dataset(n, size, seed, corruption)
    write_dataset(samples, out, modality)
    click.echo(f"wrote {len(samples)} triples to {out}")


if __name__ == "__main__":
    sys.exit(main())
