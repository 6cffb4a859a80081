import logging
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from data_science.src.data.recordings import WindowSet
from data_science.src.errors import ConfigError, NumericError
from data_science.src.masking.mask_sampler import mask_batch_values
from data_science.src.masking.strategy_config import StrategyConfig
from data_science.src.model.checkpoint import save_checkpoint
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import (ModelParams, ForwardMode, init_params, evaluate_gradients,
                                            reconstruction_objective, apply_buffer_updates)
from data_science.src.objective.losses import LossBreakdown, DEFAULT_ALPHA
from data_science.src.tuning.adam_optimizer import OptimizerState, adam_step
from data_science.src.tuning.run_log import RunLog
from data_science.src.utils import ratio_to_count
from utils import create_logger, progress_enabled


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 150
    batch_size: int = 256
    lr: float = 1e-3
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got {self.epochs} and {self.batch_size}",
                              key_path="pretrain")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}", key_path="pretrain.lr")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}", key_path="alpha")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PretrainResult:
    params: ModelParams
    loss_curve: List[LossBreakdown]
    state: OptimizerState
    checkpoint_path: Optional[Path] = None


def _check_strategy_masks_something(strategy: StrategyConfig, window_length: int, channel_count: int):
    masked = 0
    if strategy.masks_time:
        masked += ratio_to_count(strategy.time_ratio, window_length)
    if strategy.masks_span:
        masked += ratio_to_count(strategy.span_ratio, window_length)
    if strategy.masks_channels:
        try:
            masked += strategy.channel_count_for(channel_count)
        except ValueError as e:
            raise ConfigError(str(e), key_path="strategy", cause=e)
    if masked == 0:
        raise ConfigError(f"strategy '{strategy.kind}' masks no cells on {window_length} x {channel_count} windows",
                          key_path="strategy")


class Pretrainer:
    """
    MASKED-RECONSTRUCTION PRETRAINING
    =================================

    Every epoch shuffles the training windows, masks each batch with the
    configured strategy, reconstructs the raw values and minimizes the weighted
    time/channel loss with Adam. The run is a pure function of (config, seed,
    data).
    """

    def __init__(self, encoder_config: EncoderConfig = None, logger: logging.Logger = None):
        """
        Args:
            encoder_config (EncoderConfig, optional): Network sizes. Defaults to EncoderConfig().
            logger (logging.Logger, optional): Logger instance
        """
        self.encoder_config = encoder_config or EncoderConfig()
        self.logger = logger or create_logger('Pretrainer', 'pretraining.log')

    def pretrain(self, cfg: PretrainConfig, train: WindowSet, checkpoint_path: str | Path = None,
                 run_log: RunLog = None) -> PretrainResult:
        """
        Pretrain a fresh network on unlabeled windows.

        Args:
            cfg (PretrainConfig): Schedule, strategy, alpha and seed
            train (WindowSet): Training windows (labels unused)
            checkpoint_path (str | Path, optional): Where the final parameters are saved
            run_log (RunLog, optional): Receives one record per step

        Returns:
            PretrainResult: Final params, per-epoch mean LossBreakdown, optimizer state

        Raises:
            ConfigError: Strategy masks nothing or more channels than K
            NumericError: Non-finite loss or gradient, with epoch/step context
        """
        if len(train) == 0:
            raise ValueError("Cannot pretrain on an empty window set")
        _check_strategy_masks_something(cfg.strategy, train.window_length, train.channel_count)
        run_log = run_log or RunLog()

        encoder_config = self.encoder_config
        if encoder_config.max_len is None:
            encoder_config = replace(encoder_config, max_len=train.window_length)
        params = init_params(encoder_config, train.channel_count, train.num_classes, cfg.seed)
        state = OptimizerState.for_params(params)
        rng = np.random.default_rng([cfg.seed, 1])
        values = train.values()

        self.logger.info(f"[PRETRAIN] strategy={cfg.strategy.kind}, alpha={cfg.alpha}, windows={len(train)}, "
                         f"epochs={cfg.epochs}, batch_size={cfg.batch_size}, seed={cfg.seed}")
        loss_curve = []
        for epoch in tqdm(range(1, cfg.epochs + 1), desc="pretrain", disable=not progress_enabled()):
            order = rng.permutation(len(values))
            step_losses = []
            for step, start in enumerate(range(0, len(order), cfg.batch_size)):
                raw = values[order[start:start + cfg.batch_size]]
                masked, specs = mask_batch_values(raw, cfg.strategy, rng)
                loss_fn = reconstruction_objective(masked, raw, specs, cfg.alpha,
                                                   dropout_seed=int(rng.integers(2 ** 63 - 1)),
                                                   mode=ForwardMode.TRAIN)
                try:
                    evaluation, grads = evaluate_gradients(params, loss_fn)
                    adam_step(params, grads, state, cfg.lr)
                except NumericError as e:
                    raise NumericError(f"pretraining epoch {epoch} step {step}: {e}", cause=e)
                apply_buffer_updates(params, evaluation.buffer_updates)
                breakdown = evaluation.details
                step_losses.append(breakdown)
                run_log.write(epoch=epoch, step=step, **breakdown.to_dict())

            epoch_loss = LossBreakdown.mean(step_losses)
            loss_curve.append(epoch_loss)
            self.logger.info(f"[EPOCH {epoch}/{cfg.epochs}] combined={epoch_loss.combined:.6f} "
                             f"time={epoch_loss.loss_time} channel={epoch_loss.loss_channel}")

        saved = None
        if checkpoint_path is not None:
            saved = save_checkpoint(params, checkpoint_path)
            self.logger.info(f"[SUCCESS] Pretrained checkpoint saved to {saved}")
        return PretrainResult(params=params, loss_curve=loss_curve, state=state, checkpoint_path=saved)


def reconstruction_error(params: ModelParams, windows: WindowSet, strategy: StrategyConfig,
                         alpha: float = DEFAULT_ALPHA, seed: int = 0, batch_size: int = 256) -> LossBreakdown:
    """
    Eval-mode masked reconstruction loss of a model on held-out windows.

    Returns:
        LossBreakdown: Mean over batches
    """
    if len(windows) == 0:
        raise ValueError("Cannot measure reconstruction error on an empty window set")
    rng = np.random.default_rng(seed)
    values = windows.values()
    breakdowns = []
    for start in range(0, len(values), batch_size):
        raw = values[start:start + batch_size]
        masked, specs = mask_batch_values(raw, strategy, rng)
        breakdowns.append(reconstruction_objective(masked, raw, specs, alpha, mode=ForwardMode.EVAL)(params).details)
    return LossBreakdown.mean(breakdowns)
