import os
import tempfile

# must be set before any logger or progress bar is created
os.environ.setdefault("CHANNEL_MASK_PROGRESS", "0")
os.environ.setdefault("CHANNEL_MASK_LOGS_DIR", tempfile.mkdtemp(prefix="channel-mask-logs-"))

import numpy as np
import pytest

from data_science.src.data.synthetic import synth_generate
from data_science.src.data.windowing import SplitSpec, SplitPolicy, segment_recordings
from data_science.src.masking.strategy_config import StrategyConfig
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.pipeline.pipeline_manager import ExperimentSetup, PipelineManager
from data_science.src.tuning.fine_tuner import FinetuneConfig
from data_science.src.tuning.pretrainer import PretrainConfig
from utils.logger_utils import create_logger


@pytest.fixture(scope="session")
def logger():
    return create_logger('TestChannelMask', 'test_channel_mask.log')


@pytest.fixture(scope="session")
def tiny_encoder():
    """Reduced network used wherever training speed matters."""
    return EncoderConfig(d_model=16, num_blocks=1, num_heads=2, ff_dim=32, dropout=0.1, head_widths=(16, 8))


@pytest.fixture(scope="session")
def tiny_recordings():
    """5 subjects x 3 classes x 60 samples, 3 channels."""
    return synth_generate(num_subjects=5, classes=3, length=60, channels=3, seed=0)


@pytest.fixture(scope="session")
def tiny_windows(tiny_recordings):
    """75 windows of 20 x 3 (stride 10)."""
    return segment_recordings(tiny_recordings, 20, 0.5)


@pytest.fixture(scope="session")
def tiny_setup(tiny_windows):
    """One-epoch schedules on the tiny dataset with two seeds."""
    strategy = StrategyConfig(kind="channel", channel_count_masked=1)
    return ExperimentSetup(
        windows=tiny_windows,
        split=SplitSpec(policy=SplitPolicy.RANDOM_FRACTION, test_fraction=0.2, val_fraction=0.2),
        pretrain=PretrainConfig(epochs=1, batch_size=16, lr=1e-3, strategy=strategy),
        finetune=FinetuneConfig(epochs=1, batch_size=16, lr=1e-3),
        seeds=(0, 1),
        dataset_tag="tiny",
    )


@pytest.fixture
def manager(tiny_encoder, logger):
    return PipelineManager(tiny_encoder, logger=logger)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
