import logging
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from data_science.src.data.recordings import WindowSet
from data_science.src.errors import ConfigError, NumericError
from data_science.src.evaluation.metrics import evaluate
from data_science.src.model.checkpoint import save_checkpoint
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import (ModelParams, ForwardMode, ENCODER, RECONSTRUCTION_HEAD, CLASSIFIER_HEAD,
                                            init_params, reinitialize_group, evaluate_gradients,
                                            classification_objective, apply_buffer_updates)
from data_science.src.tuning.adam_optimizer import OptimizerState, adam_step
from data_science.src.tuning.run_log import RunLog
from utils import create_logger, progress_enabled

PRETRAINED_ENCODER = "pretrained"
RANDOM_ENCODER = "random"


@dataclass(frozen=True)
class FinetuneConfig:
    """
    Downstream schedule.

    encoder_init defaults to 'pretrained' when the encoder is frozen (linear
    probing) and to 'random' otherwise (the supervised baseline). 'pretrained'
    with freeze_encoder=False fine-tunes the pretrained encoder end to end.
    """
    epochs: int = 100
    batch_size: int = 1024
    lr: float = 1e-3
    freeze_encoder: bool = True
    encoder_init: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got {self.epochs} and {self.batch_size}",
                              key_path="finetune")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}", key_path="finetune.lr")
        if self.encoder_init not in (None, PRETRAINED_ENCODER, RANDOM_ENCODER):
            raise ConfigError(f"must be '{PRETRAINED_ENCODER}' or '{RANDOM_ENCODER}', got {self.encoder_init!r}",
                              key_path="finetune.encoder_init")
        if self.freeze_encoder and self.resolved_encoder_init == RANDOM_ENCODER:
            raise ConfigError("a frozen encoder must come from a pretrained checkpoint",
                              key_path="finetune.encoder_init")

    @property
    def resolved_encoder_init(self) -> str:
        if self.encoder_init is not None:
            return self.encoder_init
        return PRETRAINED_ENCODER if self.freeze_encoder else RANDOM_ENCODER

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FinetuneResult:
    params: ModelParams
    history: List[dict]
    state: OptimizerState
    checkpoint_path: Optional[Path] = None


class FineTuner:
    """
    DOWNSTREAM CLASSIFIER TRAINING
    ==============================

    Trains a freshly initialized classifier head with cross entropy on top of
    either a frozen pretrained encoder or a trainable encoder. Fixed number of
    epochs; the validation set is only monitored.
    """

    def __init__(self, encoder_config: EncoderConfig = None, logger: logging.Logger = None):
        """
        Args:
            encoder_config (EncoderConfig, optional): Sizes of a randomly initialized encoder
            logger (logging.Logger, optional): Logger instance
        """
        self.encoder_config = encoder_config or EncoderConfig()
        self.logger = logger or create_logger('FineTuner', 'fine_tuning.log')

    def _initial_params(self, checkpoint: Optional[ModelParams], cfg: FinetuneConfig,
                        labeled: WindowSet) -> ModelParams:
        if cfg.resolved_encoder_init == PRETRAINED_ENCODER:
            if checkpoint is None:
                raise ConfigError("a pretrained checkpoint is required", key_path="finetune.encoder_init")
            if checkpoint.channel_count != labeled.channel_count:
                raise ConfigError(f"checkpoint has {checkpoint.channel_count} channels, "
                                  f"data has {labeled.channel_count}", key_path="finetune")
            if checkpoint.num_classes != labeled.num_classes:
                raise ConfigError(f"checkpoint has {checkpoint.num_classes} classes, "
                                  f"data has {labeled.num_classes}", key_path="finetune")
            params = reinitialize_group(checkpoint, CLASSIFIER_HEAD, cfg.seed)
        else:
            encoder_config = checkpoint.config if checkpoint is not None else self.encoder_config
            if encoder_config.max_len is None:
                encoder_config = replace(encoder_config, max_len=labeled.window_length)
            params = init_params(encoder_config, labeled.channel_count, labeled.num_classes, cfg.seed)
        params.freeze(ENCODER, cfg.freeze_encoder)
        params.freeze(RECONSTRUCTION_HEAD, True)
        params.freeze(CLASSIFIER_HEAD, False)
        return params

    def finetune(self, checkpoint: Optional[ModelParams], cfg: FinetuneConfig, labeled: WindowSet,
                 val: WindowSet = None, run_log: RunLog = None,
                 checkpoint_path: str | Path = None) -> FinetuneResult:
        """
        Train the downstream classifier.

        Args:
            checkpoint (ModelParams, optional): Pretrained parameters (unchanged by this call)
            cfg (FinetuneConfig): Schedule, freezing and seed
            labeled (WindowSet): Labeled training windows
            val (WindowSet, optional): Monitoring set, F1 logged every epoch
            run_log (RunLog, optional): Receives per-step ce_loss and per-epoch val_f1 records
            checkpoint_path (str | Path, optional): Where the classifier parameters are saved

        Returns:
            FinetuneResult: Trained params, per-epoch history, optimizer state

        Raises:
            ConfigError: Channel/class counts differ from the checkpoint, or no checkpoint for a pretrained encoder
            NumericError: Non-finite loss or gradient, with epoch/step context
        """
        if len(labeled) == 0:
            raise ValueError("Cannot fine-tune on an empty window set")
        run_log = run_log or RunLog()
        params = self._initial_params(checkpoint, cfg, labeled)
        encoder_hash = params.content_hash(ENCODER)
        state = OptimizerState.for_params(params)
        rng = np.random.default_rng([cfg.seed, 2])
        values, labels = labeled.values(), labeled.labels()

        self.logger.info(f"[FINETUNE] encoder={cfg.resolved_encoder_init}, frozen={cfg.freeze_encoder}, "
                         f"labeled={len(labeled)}, epochs={cfg.epochs}, batch_size={cfg.batch_size}, seed={cfg.seed}")
        history = []
        for epoch in tqdm(range(1, cfg.epochs + 1), desc="finetune", disable=not progress_enabled()):
            order = rng.permutation(len(values))
            losses = []
            for step, start in enumerate(range(0, len(order), cfg.batch_size)):
                batch = order[start:start + cfg.batch_size]
                loss_fn = classification_objective(values[batch], labels[batch],
                                                   dropout_seed=int(rng.integers(2 ** 63 - 1)),
                                                   mode=ForwardMode.TRAIN)
                try:
                    evaluation, grads = evaluate_gradients(params, loss_fn)
                    adam_step(params, grads, state, cfg.lr)
                except NumericError as e:
                    raise NumericError(f"fine-tuning epoch {epoch} step {step}: {e}", cause=e)
                apply_buffer_updates(params, evaluation.buffer_updates)
                losses.append(evaluation.loss)
                run_log.write(epoch=epoch, step=step, ce_loss=evaluation.loss)

            record = {"epoch": epoch, "ce_loss": float(np.mean(losses)), "val_f1": None}
            if val is not None and len(val) > 0:
                record["val_f1"] = evaluate(params, val)[0]
                run_log.write(epoch=epoch, val_f1=record["val_f1"])
            history.append(record)
            self.logger.info(f"[EPOCH {epoch}/{cfg.epochs}] ce_loss={record['ce_loss']:.6f} val_f1={record['val_f1']}")

        if cfg.freeze_encoder and params.content_hash(ENCODER) != encoder_hash:
            raise RuntimeError("frozen encoder parameters changed during fine-tuning")

        saved = None
        if checkpoint_path is not None:
            saved = save_checkpoint(params, checkpoint_path)
            self.logger.info(f"[SUCCESS] Classifier checkpoint saved to {saved}")
        return FinetuneResult(params=params, history=history, state=state, checkpoint_path=saved)
