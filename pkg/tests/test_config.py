import pytest

from padst.config import ConfigError, ExperimentConfig, read_config_file
from padst.noising import NoiseRates


class TestExperimentConfig:
    def test_defaults_resolve(self):
        cfg = ExperimentConfig()
        assert cfg.noise_spec().name == "WG03P08-AG03P08-M"
        assert cfg.model_config().d_model == 64
        assert cfg.train_config().lr == 3e-4

    def test_baselines_default_to_zero_noise(self):
        assert ExperimentConfig(variant="pretrained_enc").noise_spec().is_zero
        with pytest.raises(ConfigError):
            ExperimentConfig(variant="two_sep", noise="WG03-AG03-D")

    def test_named_noise_setting(self):
        spec = ExperimentConfig(noise="WG01-AG03-D").noise_spec()
        assert spec.pretrain == NoiseRates(0.1, 0.0) and spec.finetune == NoiseRates(0.3, 0.0)
        assert spec.mode == "delete"

    def test_model_overrides_beat_preset(self):
        cfg = ExperimentConfig(model_preset="large", d_model=64, heads=4)
        mc = cfg.model_config()
        assert (mc.layers, mc.d_model, mc.heads, mc.d_ff) == (4, 64, 4, 512)

    @pytest.mark.parametrize("kw", [{"variant": "nope"}, {"translator": "learned"}, {"noise": "WG3-A-D"},
                                    {"batch_size": 0}, {"finetune_steps": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_stage_seeds(self):
        a, b = ExperimentConfig(seed=1), ExperimentConfig(seed=2)
        assert a.stage_seed("pretrain") == ExperimentConfig(seed=1).stage_seed("pretrain")
        assert a.stage_seed("pretrain") != a.stage_seed("finetune")
        assert a.stage_seed("pretrain") != b.stage_seed("pretrain")


class TestFiles:
    def test_parse_with_comments(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("# experiment\nseed = 7   # root seed\n\nnoise = WG01-AG03-D\nnoise_at_inference = true\n")
        cfg = ExperimentConfig.load(p)
        assert cfg.seed == 7 and cfg.noise == "WG01-AG03-D" and cfg.noise_at_inference is True

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("sed = 7\n")
        with pytest.raises(ConfigError, match="unknown config key 'sed'"):
            ExperimentConfig.load(p)

    @pytest.mark.parametrize("text", ["seed 7\n", "seed = 1\nseed = 2\n", "= 3\n"])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "exp.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError):
            read_config_file(p)

    def test_bad_value_type(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("seed = seven\n")
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig.load(p)

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("seed = 7\nlr = 0.01\n")
        assert ExperimentConfig.load(p, {"seed": 9}).seed == 9

    def test_resolved_file_reloads_to_same_config(self, tmp_path):
        cfg = ExperimentConfig(seed=3, variant="pretrained_enc", d_model=32, heads=4)
        cfg.write(tmp_path / "config.resolved")
        text = (tmp_path / "config.resolved").read_text()
        assert "version = " in text and "noise = W-A-D" in text
        back = ExperimentConfig.load(tmp_path / "config.resolved")
        assert back.resolved() == cfg.resolved()
