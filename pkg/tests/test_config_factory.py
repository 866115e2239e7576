import json

import pytest

from src.services.config_factory import ConfigFactory
from src.utils import constants as C
from src.utils.errors import ConfigError


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    def _point_to(content):
        path = tmp_path / "cn_config.json"
        path.write_text(content)
        monkeypatch.setenv("CN_CONFIG_PATH", str(path))
        ConfigFactory.reset()
        return path
    return _point_to


class TestConfigFactory:

    def test_packaged_defaults_match_constants(self):
        train = ConfigFactory.get_train_config()
        assert (train.n_steps, train.k_disc, train.batch_size) == (C.MAX_OUTER_STEPS, C.DISCRIMINATOR_STEPS,
                                                                  C.BATCH_SIZE)
        assert train.lr_classifier == C.ADAM_LR
        model = ConfigFactory.get_model_config()
        assert (model.representation_dim, model.hidden_dim) == (C.REPRESENTATION_DIM, C.HIDDEN_DIM)
        assert ConfigFactory.get_snapshot_steps() == C.SNAPSHOT_STEPS
        assert ConfigFactory.get_data_config().split_ratios == C.SPLIT_RATIOS

    def test_overrides_skip_none(self):
        train = ConfigFactory.get_train_config(n_steps=7, k_disc=None)
        assert train.n_steps == 7
        assert train.k_disc == C.DISCRIMINATOR_STEPS

    def test_file_from_environment(self, config_file):
        config_file(json.dumps({"training": {"n_steps": 12}, "snapshots": {"steps": [2, 4]}}))
        assert ConfigFactory.get_train_config().n_steps == 12
        assert ConfigFactory.get_snapshot_steps() == [2, 4]

    def test_broken_file_falls_back_to_constants(self, config_file):
        config_file("{ not json")
        assert ConfigFactory.get_train_config().n_steps == C.MAX_OUTER_STEPS
        assert ConfigFactory.get_snapshot_steps() == C.SNAPSHOT_STEPS

    @pytest.mark.parametrize("getter, overrides", [
        ("get_train_config", {"n_steps": 0}),
        ("get_train_config", {"batch_size": 1}),
        ("get_model_config", {"leaky_slope": 1.5}),
        ("get_data_config", {"split_ratios": (0.5, 0.5, 0.5)}),
        ("get_evaluation_config", {"n_trials": 1}),
    ])
    def test_invalid_values(self, getter, overrides):
        with pytest.raises(ConfigError):
            getattr(ConfigFactory, getter)(**overrides)

    def test_load_overrides(self, tmp_path):
        assert ConfigFactory.load_overrides("") == {}
        good = tmp_path / "spec.json"
        good.write_text('{"strength": 3.0}')
        assert ConfigFactory.load_overrides(str(good)) == {"strength": 3.0}
        bad = tmp_path / "list.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            ConfigFactory.load_overrides(str(bad))
        with pytest.raises(ConfigError):
            ConfigFactory.load_overrides(str(tmp_path / "missing.json"))
