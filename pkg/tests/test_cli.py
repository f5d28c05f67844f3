import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from sammese.cli import main
from sammese.data import make_synthetic_dataset, write_dataset

TOY_CFG = """
sam_input_size = 64
mcfm_input_size = 64
encoder_blocks = 2
encoder_dim = 32
pyramid_widths = (16, 32, 64, 128)
learning_rate = 1e-3
batch_size = 2
epochs = 1
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def cfg_file(tmp_path):
    f = tmp_path / "toy.cfg"
    f.write_text(TOY_CFG)
    return str(f)


@pytest.fixture
def data_dir(tmp_path):
    d = tmp_path / "data"
    write_dataset(make_synthetic_dataset(2, 64, 0), d)
    return str(d)


class TestBasics:
    def test_help(self, runner):
        assert runner.invoke(main, ["--help"]).exit_code == 0
        for cmd in ("train", "predict", "eval", "ablate", "synth-data"):
            assert runner.invoke(main, [cmd, "--help"]).exit_code == 0

    def test_unknown_flag(self, runner):
        assert runner.invoke(main, ["train", "--warp"]).exit_code == 2

    def test_train_without_data_is_usage_error(self, runner, cfg_file):
        result = runner.invoke(main, ["train", "--config", cfg_file])
        assert result.exit_code == 2
        assert "no dataset" in result.output


class TestTrainPredictEval:
    def test_full_pipeline(self, runner, cfg_file, data_dir, tmp_path):
        ckpt = tmp_path / "ckpt"
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["train", "--config", cfg_file, "--data", data_dir,
             "--ckpt", str(ckpt), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "learnable parameters:" in result.output
        assert (ckpt / "final.pt").exists()
        assert (out / "train_log.csv").exists()

        pred = tmp_path / "pred"
        result = runner.invoke(
            main,
            ["predict", "--config", cfg_file, "--ckpt", str(ckpt / "final.pt"),
             "--data", data_dir, "--out", str(pred),
             "--dump-prompts", "--dump-coarse"],
        )
        assert result.exit_code == 0, result.output
        png = pred / "synth_0000.png"
        assert png.exists() and (pred / "synth_0000_coarse.png").exists()
        with Image.open(png) as im:
            assert im.mode == "L" and im.size == (64, 64)
        prompts = json.loads((pred / "prompts.json").read_text())
        assert "synth_0000" in prompts

        result = runner.invoke(
            main, ["eval", str(pred), str(data_dir) + "/GT", "--out", str(tmp_path / "ev")]
        )
        assert result.exit_code == 0, result.output
        assert "MAE" in result.output
        assert (tmp_path / "ev" / "metrics.csv").exists()

    def test_train_synthetic_and_ablate_flag(self, runner, cfg_file, tmp_path):
        result = runner.invoke(
            main,
            ["train", "--config", cfg_file, "--synthetic", "2",
             "--ckpt", str(tmp_path / "c"), "--out", str(tmp_path / "o"),
             "--ablate", "no-mcfm"],
        )
        assert result.exit_code == 0, result.output

    def test_train_determinism(self, runner, cfg_file, data_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            ckpt = tmp_path / name
            result = runner.invoke(
                main,
                ["train", "--config", cfg_file, "--data", data_dir, "--seed", "0",
                 "--ckpt", str(ckpt), "--out", str(tmp_path / f"o{name}")],
            )
            assert result.exit_code == 0, result.output
            outs.append((ckpt / "final.pt").read_bytes())
        assert outs[0] == outs[1]

    def test_predict_size_mismatch_reported(self, runner, cfg_file, data_dir, tmp_path):
        ckpt = tmp_path / "ckpt"
        runner.invoke(
            main,
            ["train", "--config", cfg_file, "--data", data_dir,
             "--ckpt", str(ckpt), "--out", str(tmp_path / "o")],
        )
        # corrupt one aux image so its pair fails but the batch continues
        bad = make_synthetic_dataset(1, 48, 9)[0]
        from sammese.data import save_mask_png

        save_mask_png(bad.aux[0], f"{data_dir}/T/synth_0001.png")
        result = runner.invoke(
            main,
            ["predict", "--config", cfg_file, "--ckpt", str(ckpt / "final.pt"),
             "--data", data_dir, "--out", str(tmp_path / "p")],
        )
        assert result.exit_code != 0
        assert (tmp_path / "p" / "synth_0000.png").exists()


class TestAblateAndSynthData:
    def test_ablate_prompts_table(self, runner, cfg_file, tmp_path):
        result = runner.invoke(
            main,
            ["ablate", "--config", cfg_file, "--which", "prompts",
             "--synthetic", "2"],
        )
        assert result.exit_code == 0, result.output
        for row in ("full", "w/o Semantic", "w/o Geometric"):
            assert row in result.output

    def test_ablate_queries_values(self, runner, cfg_file, tmp_path):
        result = runner.invoke(
            main,
            ["ablate", "--config", cfg_file, "--which", "queries",
             "--values", "1,5", "--synthetic", "2"],
        )
        assert result.exit_code == 0, result.output
        assert "N=1" in result.output and "N=5" in result.output

    def test_ablate_bad_values(self, runner, cfg_file):
        result = runner.invoke(
            main,
            ["ablate", "--config", cfg_file, "--which", "queries",
             "--values", "a,b", "--synthetic", "2"],
        )
        assert result.exit_code == 2

    def test_synth_data_layout(self, runner, tmp_path):
        out = tmp_path / "ds"
        result = runner.invoke(
            main, ["synth-data", "--n", "3", "--size", "48", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        for sub in ("RGB", "T", "GT"):
            assert len(list((out / sub).glob("*.png"))) == 3

    def test_synth_data_depth(self, runner, tmp_path):
        out = tmp_path / "ds"
        result = runner.invoke(
            main,
            ["synth-data", "--n", "1", "--size", "48", "--modality", "depth",
             "--out", str(out)],
        )
        assert result.exit_code == 0
        assert (out / "Depth").is_dir()
