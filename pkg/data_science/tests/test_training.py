"""
Tests for Adam, masked pretraining and downstream fine-tuning
"""
import numpy as np
import pytest

from data_science.src.data.synthetic import synth_generate
from data_science.src.data.windowing import (SplitPolicy, SplitSpec, normalize, sample_per_class,
                                             segment_recordings, split_by_subject)
from data_science.src.errors import ConfigError, NumericError
from data_science.src.evaluation.metrics import evaluate
from data_science.src.masking.strategy_config import StrategyConfig
from data_science.src.model.checkpoint import load_checkpoint
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import ENCODER, ModelParams
from data_science.src.tuning.adam_optimizer import OptimizerState, adam_step
from data_science.src.tuning.fine_tuner import FinetuneConfig, FineTuner
from data_science.src.tuning.pretrainer import PretrainConfig, Pretrainer, reconstruction_error
from data_science.src.tuning.run_log import RunLog

CHANNEL_STRATEGY = StrategyConfig(kind="channel", channel_count_masked=1)


def _scalar_params(value=0.0, frozen_encoder=False):
    params = ModelParams(EncoderConfig(), 1, 2, {"encoder.theta": np.array([value]),
                                                 "classifier_head.theta": np.array([value])})
    params.freeze(ENCODER, frozen_encoder)
    return params


@pytest.fixture(scope="module")
def pretrained(tiny_encoder, tiny_windows, logger):
    cfg = PretrainConfig(epochs=2, batch_size=16, strategy=CHANNEL_STRATEGY, seed=0)
    return Pretrainer(tiny_encoder, logger).pretrain(cfg, tiny_windows)


def test_adam_zero_gradient_keeps_params():
    """A zero gradient moves nothing"""
    params = _scalar_params(0.5)
    state = OptimizerState.for_params(params)
    adam_step(params, {"encoder.theta": np.zeros(1), "classifier_head.theta": np.zeros(1)}, state, lr=1e-3)
    assert params["encoder.theta"][0] == 0.5
    assert state.step == 1


def test_adam_first_step_size():
    """With bias correction the first step on a unit gradient moves by lr / (1 + eps)"""
    params = _scalar_params(0.0)
    state = OptimizerState.for_params(params)
    adam_step(params, {"encoder.theta": np.ones(1), "classifier_head.theta": -np.ones(1)}, state, lr=1e-3)
    assert params["encoder.theta"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert params["classifier_head.theta"][0] == pytest.approx(1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_bias_corrections():
    """After t steps the corrections are 1 - beta^t"""
    params = _scalar_params()
    state = OptimizerState.for_params(params)
    for _ in range(3):
        adam_step(params, {"encoder.theta": np.ones(1), "classifier_head.theta": np.ones(1)}, state, lr=1e-3)
    correction1, correction2 = state.bias_corrections()
    assert correction1 == pytest.approx(1 - 0.9 ** 3)
    assert correction2 == pytest.approx(1 - 0.999 ** 3)


def test_adam_skips_frozen_groups():
    """Frozen arrays stay bit-identical whatever gradient is passed"""
    params = _scalar_params(0.25, frozen_encoder=True)
    state = OptimizerState.for_params(params)
    for _ in range(5):
        adam_step(params, {"encoder.theta": np.full(1, 3.0), "classifier_head.theta": np.ones(1)}, state, lr=0.1)
    assert params["encoder.theta"][0] == 0.25
    assert not state.first_moment["encoder.theta"].any()
    assert params["classifier_head.theta"][0] != 0.25


def test_adam_rejects_non_finite_gradient():
    """A NaN gradient is a numeric error naming the array"""
    params = _scalar_params()
    state = OptimizerState.for_params(params)
    with pytest.raises(NumericError, match="classifier_head.theta"):
        adam_step(params, {"encoder.theta": np.zeros(1), "classifier_head.theta": np.array([np.nan])}, state, 1e-3)


def test_pretrain_curve(pretrained):
    """One finite LossBreakdown per epoch; channel masking has no time term"""
    assert len(pretrained.loss_curve) == 2
    for breakdown in pretrained.loss_curve:
        assert np.isfinite(breakdown.combined)
        assert breakdown.loss_time is None
        assert breakdown.combined == breakdown.loss_channel


def test_pretrain_is_deterministic(tiny_encoder, tiny_windows, logger, pretrained):
    """The same config and seed reproduce the loss curve and the parameters exactly"""
    cfg = PretrainConfig(epochs=2, batch_size=16, strategy=CHANNEL_STRATEGY, seed=0)
    again = Pretrainer(tiny_encoder, logger).pretrain(cfg, tiny_windows)
    assert [b.combined for b in again.loss_curve] == [b.combined for b in pretrained.loss_curve]
    assert again.params.content_hash() == pretrained.params.content_hash()


def test_run_log_keeps_records_in_one_place(tmp_path):
    """A file-backed log writes NDJSON only; an in-memory log and its bound views share one list"""
    on_disk = RunLog(tmp_path / "log.ndjson")
    on_disk.bind(seed=3).write(step=0, loss=1.5)
    on_disk.write(step=1)
    assert on_disk.records == []
    assert RunLog.read(tmp_path / "log.ndjson") == [{"loss": 1.5, "seed": 3, "step": 0}, {"step": 1}]

    in_memory = RunLog()
    in_memory.bind(stage="pretrain").write(step=0)
    assert in_memory.records == [{"stage": "pretrain", "step": 0}]


def test_pretrain_visits_every_window_each_epoch(tiny_encoder, tiny_windows, logger, tmp_path):
    """Every epoch runs ceil(windows / batch) steps and the run log records them"""
    run_log = RunLog(tmp_path / "run.ndjson")
    cfg = PretrainConfig(epochs=2, batch_size=32, strategy=StrategyConfig(kind="time-channel",
                                                                           channel_count_masked=1), seed=1)
    result = Pretrainer(tiny_encoder, logger).pretrain(cfg, tiny_windows, checkpoint_path=tmp_path / "p.ckpt",
                                                       run_log=run_log.bind(seed=1))
    steps = -(-len(tiny_windows) // 32)
    records = RunLog.read(tmp_path / "run.ndjson")
    assert len(records) == 2 * steps
    assert {r["epoch"] for r in records} == {1, 2}
    assert all(r["seed"] == 1 and r["loss_time"] is not None and r["loss_channel"] is not None for r in records)
    assert load_checkpoint(result.checkpoint_path).content_hash() == result.params.content_hash()


def test_pretrain_rejects_impossible_strategy(tiny_encoder, tiny_windows, logger):
    """Masking more channels than K is a config error"""
    cfg = PretrainConfig(epochs=1, strategy=StrategyConfig(kind="channel", channel_count_masked=4))
    with pytest.raises(ConfigError):
        Pretrainer(tiny_encoder, logger).pretrain(cfg, tiny_windows)


def test_pretrain_config_validation():
    """Non-positive schedules and alpha outside [0, 1] are config errors"""
    with pytest.raises(ConfigError):
        PretrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        PretrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        PretrainConfig(alpha=1.2)


def test_reconstruction_error_is_finite(pretrained, tiny_windows):
    """Held-out reconstruction error is a finite eval-mode loss"""
    breakdown = reconstruction_error(pretrained.params, tiny_windows, CHANNEL_STRATEGY)
    assert np.isfinite(breakdown.combined) and breakdown.combined >= 0


def test_frozen_encoder_survives_finetuning(pretrained, tiny_windows, logger, tiny_encoder):
    """After 100 steps with a frozen encoder its hash is unchanged; unfrozen it changes"""
    labeled = sample_per_class(tiny_windows, 7, seed=0)
    encoder_hash = pretrained.params.content_hash(ENCODER)
    tuner = FineTuner(tiny_encoder, logger)

    frozen = tuner.finetune(pretrained.params, FinetuneConfig(epochs=100, batch_size=len(labeled)), labeled)
    assert frozen.state.step == 100
    assert frozen.params.content_hash(ENCODER) == encoder_hash

    unfrozen = tuner.finetune(pretrained.params, FinetuneConfig(epochs=5, batch_size=len(labeled),
                                                                freeze_encoder=False, encoder_init="pretrained"),
                              labeled)
    assert unfrozen.params.content_hash(ENCODER) != encoder_hash
    assert pretrained.params.content_hash(ENCODER) == encoder_hash


def test_finetune_history_and_run_log(pretrained, tiny_windows, logger, tiny_encoder):
    """Each epoch logs a cross-entropy record per step and a validation F1"""
    run_log = RunLog()
    result = FineTuner(tiny_encoder, logger).finetune(pretrained.params, FinetuneConfig(epochs=3, batch_size=32),
                                                      tiny_windows, val=tiny_windows, run_log=run_log)
    assert [h["epoch"] for h in result.history] == [1, 2, 3]
    assert all(0.0 <= h["val_f1"] <= 1.0 for h in result.history)
    assert sum("ce_loss" in r for r in run_log.records) == 3 * -(-len(tiny_windows) // 32)
    assert sum("val_f1" in r for r in run_log.records) == 3


def test_supervised_baseline_trains_from_scratch(tiny_windows, logger, tiny_encoder):
    """Without a checkpoint the random encoder is trained end to end"""
    cfg = FinetuneConfig(epochs=2, batch_size=32, freeze_encoder=False)
    assert cfg.resolved_encoder_init == "random"
    result = FineTuner(tiny_encoder, logger).finetune(None, cfg, tiny_windows)
    assert not result.params.frozen[ENCODER]
    assert result.params.num_classes == tiny_windows.num_classes


def test_finetune_class_count_mismatch(pretrained, tiny_windows, logger, tiny_encoder):
    """A checkpoint trained for other classes cannot be probed"""
    other = tiny_windows.subset(range(len(tiny_windows)))
    other.num_classes = 5
    with pytest.raises(ConfigError):
        FineTuner(tiny_encoder, logger).finetune(pretrained.params, FinetuneConfig(epochs=1), other)


def test_finetune_config_validation():
    """A frozen random encoder and unknown encoder sources are rejected"""
    with pytest.raises(ConfigError):
        FinetuneConfig(freeze_encoder=True, encoder_init="random")
    with pytest.raises(ConfigError):
        FinetuneConfig(encoder_init="imagenet")
    with pytest.raises(ConfigError):
        FinetuneConfig(batch_size=0)


def test_pretrained_probe_needs_checkpoint(tiny_windows, logger, tiny_encoder):
    """Linear probing without a checkpoint is a config error"""
    with pytest.raises(ConfigError):
        FineTuner(tiny_encoder, logger).finetune(None, FinetuneConfig(epochs=1), tiny_windows)


@pytest.mark.slow
def test_desk_scale_training_progress(logger):
    """Channel-masking pretraining halves its loss and the frozen probe beats a 1/A floor"""
    recordings = synth_generate(num_subjects=4, classes=4, length=600, channels=6, seed=0)
    windows = segment_recordings(recordings, 50, 0.5)
    split = SplitSpec(policy=SplitPolicy.EXPLICIT, test_subjects=("4",), val_subjects=())
    train, _, test = split_by_subject(windows, split)
    train, (test,) = normalize(train, [test])

    encoder = EncoderConfig(d_model=64, num_blocks=2, num_heads=4, ff_dim=128, head_widths=(64, 32))
    strategy = StrategyConfig(kind="channel", channel_count_masked=3)
    pretrained = Pretrainer(encoder, logger).pretrain(
        PretrainConfig(epochs=30, batch_size=32, lr=1e-3, strategy=strategy, seed=0), train)
    first, last = pretrained.loss_curve[0].combined, pretrained.loss_curve[-1].combined
    assert last <= 0.5 * first

    labeled = sample_per_class(train, 10, seed=0)
    probe = FineTuner(encoder, logger).finetune(pretrained.params, FinetuneConfig(epochs=100, batch_size=1024),
                                                labeled)
    f1, _ = evaluate(probe.params, test)
    assert f1 > 1.0 / 4
