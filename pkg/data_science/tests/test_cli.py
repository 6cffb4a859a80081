"""
Tests for the command-line entry point
"""
import json

import numpy as np
import pytest
import yaml

from data_science.src.data.recordings import load_csv
from data_science.src.evaluation.reports import load_report
from data_science.src.main import CONFIG_SNAPSHOT, METADATA, RUN_LOG, main
from data_science.src.model.checkpoint import load_checkpoint
import data_science.src.tuning.pretrainer as pretrainer
from data_science.src.tuning.run_log import RunLog

TINY_CONFIG = {
    "dataset": {"source": "synthetic", "synthetic": {"num_subjects": 5, "classes": 3, "length": 60, "channels": 3}},
    "window": {"length": 20, "overlap": 0.5},
    "strategy": {"kind": "channel", "channel_count_masked": 1},
    "encoder": {"d_model": 16, "num_blocks": 1, "num_heads": 2, "ff_dim": 32, "head_widths": [16, 8]},
    "pretrain": {"epochs": 1, "batch_size": 16},
    "finetune": {"epochs": 1, "batch_size": 16},
    "seeds": [0],
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG), encoding="utf-8")
    return str(path)


@pytest.fixture
def outdir(tmp_path):
    return str(tmp_path / "runs")


def _run(config_path, outdir, *args):
    return main([*args, "--config", config_path, "--outdir", outdir])


def test_synth_writes_loadable_csv(tmp_path, outdir):
    """Six classes and four subjects give 24 recordings; rerunning with the same seed gives the same file"""
    overrides = ["--set", "dataset.synthetic.num_subjects=4", "--set", "dataset.synthetic.classes=6",
                 "--set", "dataset.synthetic.length=80"]
    assert main(["synth", "--outdir", outdir, "--run-name", "a", *overrides]) == 0
    assert main(["synth", "--outdir", outdir, "--run-name", "b", *overrides]) == 0
    first, second = tmp_path / "runs" / "synth" / "a", tmp_path / "runs" / "synth" / "b"
    manifest = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["recordings"] == 24
    assert manifest["seed"] == 0 and manifest["params"]["classes"] == 6
    recordings = load_csv(first / "recordings.csv")
    assert len(recordings) == 24
    assert {r.subject_id for r in recordings} == {"1", "2", "3", "4"}
    assert (first / "recordings.csv").read_bytes() == (second / "recordings.csv").read_bytes()
    assert (first / CONFIG_SNAPSHOT).exists() and (first / METADATA).exists()


def test_pretrain_then_finetune_then_eval(tmp_path, config_path, outdir):
    """The three training commands chain through their checkpoints"""
    assert _run(config_path, outdir, "pretrain", "--run-name", "p") == 0
    pretrain_dir = tmp_path / "runs" / "pretrain" / "p"
    checkpoint = pretrain_dir / "checkpoints" / "pretrained.ckpt"
    assert load_checkpoint(checkpoint, channel_count=3, num_classes=3).channel_count == 3
    assert len(RunLog.read(pretrain_dir / RUN_LOG)) > 0
    assert (pretrain_dir / "loss_curve.csv").read_text(encoding="utf-8").startswith("epoch,")
    metadata = json.loads((pretrain_dir / METADATA).read_text(encoding="utf-8"))
    assert metadata["command"] == "pretrain"

    assert _run(config_path, outdir, "finetune", "--run-name", "f", "--checkpoint", str(checkpoint)) == 0
    finetune_dir = tmp_path / "runs" / "finetune" / "f"
    report = load_report(finetune_dir / "report.json")
    assert report.labels == ["self_supervised"]
    assert 0.0 <= report.rows[0].mean_f1 <= 1.0

    classifier = finetune_dir / "checkpoints" / "classifier.ckpt"
    assert _run(config_path, outdir, "eval", "--run-name", "e", "--checkpoint", str(classifier)) == 0
    evaluated = load_report(tmp_path / "runs" / "eval" / "e" / "report.json")
    assert evaluated.labels == ["checkpoint"]


def test_supervised_finetune_needs_no_checkpoint(tmp_path, config_path, outdir):
    """A random trainable encoder is the supervised baseline"""
    assert _run(config_path, outdir, "finetune", "--run-name", "s", "--set", "finetune.freeze_encoder=false") == 0
    assert load_report(tmp_path / "runs" / "finetune" / "s" / "report.json").labels == ["supervised"]


def test_sweep_reports_are_reproducible(tmp_path, config_path, outdir):
    """Two identical alpha sweeps write byte-identical reports"""
    for name in ("one", "two"):
        assert _run(config_path, outdir, "sweep", "--axis", "alpha", "--values", "0.1", "0.9",
                    "--run-name", name) == 0
    one, two = tmp_path / "runs" / "alpha_sweep" / "one", tmp_path / "runs" / "alpha_sweep" / "two"
    assert (one / "report.json").read_bytes() == (two / "report.json").read_bytes()
    assert (one / "report.csv").read_bytes() == (two / "report.csv").read_bytes()
    assert load_report(one / "report.json").labels == ["alpha=0.1", "alpha=0.9"]
    snapshot = yaml.safe_load((one / CONFIG_SNAPSHOT).read_text(encoding="utf-8"))
    assert snapshot["encoder"]["d_model"] == 16


def test_eval_runs_strategy_comparison(tmp_path, config_path, outdir):
    """Without a checkpoint eval runs the strategy comparison table"""
    assert _run(config_path, outdir, "eval", "--protocol", "strategy_comparison", "--run-name", "t") == 0
    table = load_report(tmp_path / "runs" / "strategy_comparison" / "t" / "report.json")
    assert len(table.labels) == 6


def test_missing_dataset_file(config_path, outdir, capsys):
    """A missing CSV exits with the data error code and names the file"""
    code = _run(config_path, outdir, "pretrain", "--set", "dataset.source=/nonexistent/recordings.csv")
    assert code == 3
    assert "/nonexistent/recordings.csv" in capsys.readouterr().err


def test_unknown_config_key(config_path, outdir, capsys):
    """Misspelt keys exit with the config error code"""
    assert _run(config_path, outdir, "pretrain", "--set", "pretrain.epoch=3") == 2
    assert "pretrain.epoch" in capsys.readouterr().err


def test_probe_without_checkpoint(config_path, outdir):
    """A frozen pretrained encoder needs --checkpoint"""
    assert _run(config_path, outdir, "finetune") == 2


def test_missing_checkpoint(tmp_path, config_path, outdir):
    """An absent checkpoint file exits with the data error code"""
    assert _run(config_path, outdir, "finetune", "--checkpoint", str(tmp_path / "absent.ckpt")) == 3


def test_checkpoint_channel_mismatch(tmp_path, config_path, outdir):
    """A checkpoint trained on three channels cannot be used on four"""
    assert _run(config_path, outdir, "pretrain", "--run-name", "p") == 0
    checkpoint = tmp_path / "runs" / "pretrain" / "p" / "checkpoints" / "pretrained.ckpt"
    code = _run(config_path, outdir, "finetune", "--checkpoint", str(checkpoint),
                "--set", "dataset.synthetic.channels=4")
    assert code == 3


def test_non_finite_gradient_exits_with_numeric_code(config_path, outdir, capsys, monkeypatch):
    """A NaN gradient aborts pretraining with exit code 4 naming the step and the array"""
    real_adam_step = pretrainer.adam_step

    def poisoned_adam_step(params, grads, state, lr):
        grads = dict(grads)
        grads["encoder.embed.weight"] = np.full_like(grads["encoder.embed.weight"], np.nan)
        return real_adam_step(params, grads, state, lr)

    monkeypatch.setattr(pretrainer, "adam_step", poisoned_adam_step)
    assert _run(config_path, outdir, "pretrain", "--run-name", "nan") == 4
    err = capsys.readouterr().err
    assert "pretraining epoch" in err and "step 0" in err
    assert "encoder.embed.weight" in err


def test_invalid_axis_is_a_usage_error(config_path, outdir):
    """argparse rejects an unknown sweep axis"""
    with pytest.raises(SystemExit) as excinfo:
        _run(config_path, outdir, "sweep", "--axis", "depth")
    assert excinfo.value.code == 2


def test_help_lists_config_keys(capsys):
    """--help documents every config key with its default"""
    with pytest.raises(SystemExit) as excinfo:
        main(["pretrain", "--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    assert "pretrain.epochs = 150" in out
    assert "strategy.kind = 'channel'" in out
