"""
Tests for run configuration loading, presets and overrides
"""
import pytest
import yaml

from data_science.src.config.run_config import (PRESETS, RunConfig, flatten_defaults, load_run_config,
                                                parse_override)
from data_science.src.errors import ConfigError


def _write_config(tmp_path, data):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults():
    """Without a file the documented defaults apply"""
    config = load_run_config()
    assert config.schema_version == 1
    assert (config.pretrain.epochs, config.pretrain.batch_size, config.pretrain.lr) == (150, 256, 1e-3)
    assert (config.finetune.epochs, config.finetune.batch_size) == (100, 1024)
    assert config.alpha == 0.5
    assert config.encoder.d_model == 128 and config.encoder.num_blocks == 3
    assert config.strategy.kind == "channel" and config.strategy.channel_count_masked == 3
    assert config.seeds == [0, 1, 2, 3, 4]
    assert config.protocol.x_values == [1, 2, 5, 10, 25, 50, 100]
    assert config.protocol.alpha_values == [0.1, 0.3, 0.5, 0.7, 0.9]
    assert config.protocol.anomaly_m_values == [1, 3, 5]


def test_file_values_override_defaults(tmp_path):
    """Keys present in the file replace the defaults, the rest stay"""
    path = _write_config(tmp_path, {"pretrain": {"epochs": 30}, "strategy": {"kind": "time-channel"}})
    config = load_run_config(path)
    assert config.pretrain.epochs == 30
    assert config.pretrain.batch_size == 256
    assert config.strategy.kind == "time-channel"


def test_set_overrides_win_over_file(tmp_path):
    """--set values are applied after the file"""
    path = _write_config(tmp_path, {"pretrain": {"epochs": 30}})
    config = load_run_config(path, ["pretrain.epochs=5", "alpha=0.7", "encoder.head_widths=[16, 8]"])
    assert config.pretrain.epochs == 5
    assert config.alpha == 0.7
    assert config.encoder.head_widths == (16, 8)


def test_unknown_key_names_dotted_path(tmp_path):
    """A misspelt key is rejected with its full path"""
    path = _write_config(tmp_path, {"pretrain": {"epoch": 30}})
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(path)
    assert excinfo.value.key_path == "pretrain.epoch"


def test_wrong_type_names_dotted_path():
    """A string where an int belongs is rejected"""
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(overrides=["finetune.batch_size=big"])
    assert excinfo.value.key_path == "finetune.batch_size"


def test_invalid_values():
    """Out-of-range values are config errors"""
    for override in ("alpha=1.5", "strategy.kind=frequency", "window.overlap=1.0", "protocol.name=nope",
                     "schema_version=2", "seeds=[]"):
        with pytest.raises(ConfigError):
            load_run_config(overrides=[override])


def test_alpha_grid_and_strategy_kinds_accepted():
    """Every swept alpha and every masking kind is a valid config"""
    for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
        assert load_run_config(overrides=[f"alpha={alpha}"]).alpha == alpha
    for kind in ("time", "span", "channel", "time-channel", "span-channel"):
        assert load_run_config(overrides=[f"strategy.kind={kind}"]).strategy.kind == kind


def test_preset_fills_defaults(tmp_path):
    """A preset supplies dataset and window settings unless the file overrides them"""
    path = _write_config(tmp_path, {"dataset": {"preset": "uci_har", "source": "har.csv"},
                                    "window": {"overlap": 0.25}})
    config = load_run_config(path)
    assert config.dataset.channel_count == 9 and config.dataset.num_classes == 6
    assert config.window.length == 128
    assert config.window.overlap == 0.25
    assert config.dataset_tag == "uci_har"


def test_usc_had_preset_splits_by_subject():
    """The USC-HAD preset holds out subjects 11-12 for validation and 13-14 for test"""
    config = load_run_config(overrides=["dataset.preset=usc_had", "dataset.source=usc.csv"])
    spec = config.split.to_spec()
    assert spec.val_subjects == ("11", "12")
    assert spec.test_subjects == ("13", "14")
    assert config.dataset.num_classes == 12


def test_unknown_preset():
    """Only the known presets are accepted"""
    assert set(PRESETS) == {"usc_had", "uci_har", "motion_sense", "synthetic"}
    with pytest.raises(ConfigError):
        load_run_config(overrides=["dataset.preset=imagenet"])


def test_missing_file(tmp_path):
    """A config path that does not exist is a config error"""
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.yaml")


def test_malformed_override():
    """Overrides must look like key=value"""
    assert parse_override("pretrain.epochs=30") == (["pretrain", "epochs"], 30)
    with pytest.raises(ConfigError):
        parse_override("pretrain.epochs")


def test_dump_then_load(tmp_path):
    """A dumped config reloads equal"""
    config = load_run_config(overrides=["encoder.d_model=16", "encoder.num_heads=2", "seeds=[3, 4]",
                                        "split.test_subjects=[1, 2]"])
    assert config.split.test_subjects == ["1", "2"]
    assert load_run_config(config.dump(tmp_path / "config.snapshot")) == config


def test_derived_stage_configs():
    """Stage configs carry the schedule, strategy, alpha and seed"""
    config = load_run_config(overrides=["pretrain.epochs=7", "alpha=0.3", "finetune.freeze_encoder=false"])
    pretrain = config.pretrain_config(seed=4)
    assert (pretrain.epochs, pretrain.alpha, pretrain.seed) == (7, 0.3, 4)
    assert pretrain.strategy == config.strategy
    finetune = config.finetune_config()
    assert finetune.seed == 0 and not finetune.freeze_encoder
    assert finetune.resolved_encoder_init == "random"


def test_flatten_defaults_lists_every_key():
    """The flattened key list covers nested sections in declaration order"""
    keys = dict(flatten_defaults())
    assert keys["pretrain.epochs"] == 150
    assert keys["strategy.kind"] == "channel"
    assert keys["encoder.head_widths"] == [256, 128]
    assert keys["dataset.synthetic.channels"] == 6
    ordered = [key for key, _ in flatten_defaults(RunConfig())]
    assert ordered[0] == "schema_version"
    assert ordered.index("window.length") < ordered.index("pretrain.epochs")
