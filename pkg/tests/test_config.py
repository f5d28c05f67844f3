import pytest

from sammese.config import RunConfig, build_config, config_hash, load_config_file, toy_config


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.sam_input_size == 1024
        assert cfg.mcfm_input_size == 384
        assert cfg.num_queries == 30
        assert cfg.learning_rate == 1e-5
        assert cfg.batch_size == 2
        assert cfg.bottleneck_dim == 768 // 4

    def test_toy_config(self):
        cfg = toy_config()
        assert cfg.sam_input_size == 64
        assert cfg.encoder_blocks == 2
        assert cfg.encoder_dim == 32
        assert cfg.embed_grid == 4
        assert cfg.bottleneck_dim == 8  # encoder_dim / 4 default

    def test_replace(self):
        cfg = toy_config()
        cfg2 = cfg.replace(seed=7)
        assert cfg2.seed == 7 and cfg.seed == 0

    @pytest.mark.parametrize(
        "kw",
        [
            {"sam_input_size": 65},
            {"mcfm_input_size": 50},
            {"madapter_variant": "bogus"},
            {"backend": "cloud"},
            {"modality": "sonar"},
            {"num_queries": -1},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            toy_config(**kw)


class TestConfigFile:
    def test_parse_types(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text(
            "# comment\n"
            "sam_input_size = 64\n"
            "learning_rate = 1e-3  # inline comment\n"
            "no_mcfm = true\n"
            "pyramid_widths = (16, 32, 64, 128)\n"
            "modality = depth\n"
        )
        ov = load_config_file(f)
        assert ov == {
            "sam_input_size": 64,
            "learning_rate": 1e-3,
            "no_mcfm": True,
            "pyramid_widths": (16, 32, 64, 128),
            "modality": "depth",
        }

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("warp_speed = 9\n")
        with pytest.raises(KeyError, match="warp_speed"):
            load_config_file(f)

    def test_bad_line(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("just words\n")
        with pytest.raises(ValueError, match="key = value"):
            load_config_file(f)

    def test_cli_overrides_file(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text(
            "sam_input_size = 64\nmcfm_input_size = 64\nencoder_dim = 32\nseed = 1\n"
        )
        cfg = build_config(f, seed=9)
        assert cfg.seed == 9
        assert cfg.sam_input_size == 64

    def test_none_cli_values_ignored(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("seed = 5\n")
        assert build_config(f, seed=None).seed == 5


class TestConfigHash:
    def test_stable(self):
        assert config_hash(toy_config()) == config_hash(toy_config())

    def test_architecture_sensitivity(self):
        assert config_hash(toy_config()) != config_hash(toy_config(encoder_dim=64))
        assert config_hash(toy_config()) != config_hash(toy_config(no_mcfm=True))

    def test_training_fields_excluded(self):
        assert config_hash(toy_config()) == config_hash(toy_config(learning_rate=0.5))
