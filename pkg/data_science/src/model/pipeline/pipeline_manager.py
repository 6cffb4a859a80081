import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from data_science.src.data.recordings import WindowSet
from data_science.src.data.windowing import (SplitPolicy, SplitSpec, split_by_subject, normalize, sample_per_class,
                                             inject_channel_anomaly)
from data_science.src.errors import ConfigError
from data_science.src.evaluation.metrics import MetricsReport, evaluate
from data_science.src.evaluation.reports import ProtocolTable
from data_science.src.masking.strategy_config import StrategyConfig
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import ModelParams
from data_science.src.tuning.fine_tuner import FinetuneConfig, FineTuner, RANDOM_ENCODER
from data_science.src.tuning.pretrainer import PretrainConfig, Pretrainer
from data_science.src.tuning.run_log import RunLog
from data_science.src.utils import (TIME_MASKING, SPAN_MASKING, CHANNEL_MASKING, TIME_CHANNEL_MASKING,
                                    SPAN_CHANNEL_MASKING, MASKING_KINDS, SUPERVISED, SELF_SUPERVISED,
                                    SEMI_SUPERVISED_X_VALUES, ALPHA_VALUES, TIME_RATIO_VALUES, CHANNEL_COUNT_VALUES,
                                    ANOMALY_M_VALUES, TRICK_VALUES, STRATEGY_COMPARISON, SEMI_SUPERVISED,
                                    ALPHA_SWEEP, TIME_RATIO_SWEEP, CHANNEL_COUNT_SWEEP, ANOMALY, TRICK_COMPARISON,
                                    round_half_up)
from utils import create_logger

USC_HAD = "usc_had"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
ANOMALY_PRETRAIN_CHANNELS = 3
TRICK_LABELS = {"same": "Same", "different": "Different"}

# (mean F1, per-class F1) of one run
RunScore = Tuple[float, List[float]]


@dataclass(frozen=True)
class ExperimentSetup:
    """
    Everything a protocol needs besides its own axis: the segmented windows of
    the whole dataset, how to split them, and the pretrain/finetune schedules.
    """
    windows: WindowSet
    split: SplitSpec
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    dataset_tag: str = "dataset"
    preset: Optional[str] = None
    snapshot: dict = field(default_factory=dict)

    @property
    def channel_count(self) -> int:
        return self.windows.channel_count


@dataclass
class ExperimentData:
    """Normalized subject-disjoint splits for one seed."""
    train: WindowSet
    val: WindowSet
    test: WindowSet


def validate_strategy(strategy: StrategyConfig, channel_count: int):
    try:
        strategy.validate(channel_count)
    except ValueError as e:
        raise ConfigError(str(e), key_path="strategy", cause=e)


def comparison_strategies(channel_count: int, base: StrategyConfig = None) -> Dict[str, StrategyConfig]:
    """
    The five strategies of the strategy comparison, sized for K channels.

    Channel masking hides half the channels; the combined kinds hide two
    channels on top of 10% time steps or 15% span coverage.
    """
    base = (base or StrategyConfig()).with_overrides(channel_ratio=None)
    pair = min(2, channel_count)
    return {
        TIME_MASKING: base.with_overrides(kind=TIME_MASKING, time_ratio=0.10),
        SPAN_MASKING: base.with_overrides(kind=SPAN_MASKING, span_ratio=0.15),
        CHANNEL_MASKING: base.with_overrides(kind=CHANNEL_MASKING,
                                             channel_count_masked=max(1, round_half_up(channel_count / 2))),
        TIME_CHANNEL_MASKING: base.with_overrides(kind=TIME_CHANNEL_MASKING, time_ratio=0.10,
                                                  channel_count_masked=pair),
        SPAN_CHANNEL_MASKING: base.with_overrides(kind=SPAN_CHANNEL_MASKING, span_ratio=0.15,
                                                  channel_count_masked=pair),
    }


def alpha_sweep_strategy(channel_count: int, base: StrategyConfig = None) -> StrategyConfig:
    """Time-channel masking with similar masked fractions on both axes."""
    base = (base or StrategyConfig()).with_overrides(channel_ratio=None)
    if channel_count <= 6:
        return base.with_overrides(kind=TIME_CHANNEL_MASKING, time_ratio=0.17, channel_count_masked=1)
    return base.with_overrides(kind=TIME_CHANNEL_MASKING, time_ratio=0.22, channel_count_masked=2)


def trick_strategy(channel_count: int, preset: Optional[str] = None, base: StrategyConfig = None) -> StrategyConfig:
    """Time-channel masking used to compare same- and different-position masking."""
    base = (base or StrategyConfig()).with_overrides(channel_ratio=None)
    if preset == USC_HAD:
        return base.with_overrides(kind=TIME_CHANNEL_MASKING, time_ratio=0.20, channel_count_masked=1)
    return base.with_overrides(kind=TIME_CHANNEL_MASKING, time_ratio=0.10,
                               channel_count_masked=min(2, channel_count))


class PipelineManager:
    """
    PROTOCOL RUNNER
    ===============

    Runs the multi-seed experimental protocols: every (row, seed) pair is an
    independent split -> normalize -> pretrain -> finetune -> evaluate
    pipeline, and each protocol folds the finished runs into a ProtocolTable
    of MetricsReport rows. Runs are deterministic given their seed, so the
    optional thread fan-out does not change any result.
    """

    def __init__(self, encoder_config: EncoderConfig = None, logger: logging.Logger = None, workers: int = 1,
                 run_log: RunLog = None):
        """
        Args:
            encoder_config (EncoderConfig, optional): Network sizes for every run
            logger (logging.Logger, optional): Logger instance
            workers (int): Threads used for independent runs
            run_log (RunLog, optional): Receives the training records of every run, tagged by row and seed
        """
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.encoder_config = encoder_config or EncoderConfig()
        self.logger = logger or create_logger('PipelineManager', 'pipeline_manager.log')
        self.workers = workers
        self.run_log = run_log or RunLog()
        self.pretrainer = Pretrainer(self.encoder_config, logger=self.logger)
        self.fine_tuner = FineTuner(self.encoder_config, logger=self.logger)

    # ------------------------------------------------------------------ runs

    def prepare(self, setup: ExperimentSetup, seed: int) -> ExperimentData:
        """Split by subject (random policies are reseeded per run) and z-score with train statistics."""
        split = setup.split
        if split.policy == SplitPolicy.RANDOM_FRACTION:
            split = replace(split, seed=seed)
        train, val, test = split_by_subject(setup.windows, split)
        if len(train) == 0 or len(test) == 0:
            raise ConfigError(f"split leaves train={len(train)} and test={len(test)} windows", key_path="split")
        train, (val, test) = normalize(train, [val, test])
        return ExperimentData(train=train, val=val, test=test)

    def pretrain(self, setup: ExperimentSetup, data: ExperimentData, strategy: StrategyConfig, seed: int,
                 alpha: float = None, run_log: RunLog = None) -> ModelParams:
        cfg = replace(setup.pretrain, strategy=strategy, seed=seed,
                      alpha=setup.pretrain.alpha if alpha is None else alpha)
        return self.pretrainer.pretrain(cfg, data.train, run_log=run_log).params

    def finetune(self, setup: ExperimentSetup, data: ExperimentData, checkpoint: Optional[ModelParams], seed: int,
                 x: int = None, run_log: RunLog = None) -> ModelParams:
        """Classifier on top of a checkpoint, or the supervised baseline when checkpoint is None."""
        labeled = data.train if x is None else sample_per_class(data.train, x, seed)
        cfg = replace(setup.finetune, seed=seed)
        if checkpoint is None:
            cfg = replace(cfg, freeze_encoder=False, encoder_init=RANDOM_ENCODER)
        val = data.val if len(data.val) else None
        return self.fine_tuner.finetune(checkpoint, cfg, labeled, val=val, run_log=run_log).params

    def _self_supervised_run(self, setup: ExperimentSetup, strategy: StrategyConfig, seed: int,
                             alpha: float = None, log_tag: str = "") -> RunScore:
        data = self.prepare(setup, seed)
        run_log = self.run_log.bind(row=log_tag, seed=seed)
        checkpoint = self.pretrain(setup, data, strategy, seed, alpha, run_log=run_log.bind(stage="pretrain"))
        params = self.finetune(setup, data, checkpoint, seed, run_log=run_log.bind(stage="finetune"))
        return evaluate(params, data.test)

    def _supervised_run(self, setup: ExperimentSetup, seed: int, log_tag: str = SUPERVISED) -> RunScore:
        data = self.prepare(setup, seed)
        run_log = self.run_log.bind(row=log_tag, seed=seed, stage="finetune")
        return evaluate(self.finetune(setup, data, None, seed, run_log=run_log), data.test)

    def _map(self, fn: Callable, items: Sequence) -> list:
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, items))

    def _fold(self, protocol: str, setup: ExperimentSetup, seeds: Sequence[int],
              rows: List[Tuple[str, dict, Callable[[int], RunScore]]]) -> ProtocolTable:
        """
        Run every (row, seed) job and aggregate per row.

        Args:
            rows: (label, row config, run function of the seed) in table order
        """
        self.logger.info(f"[PROTOCOL] {protocol} on {setup.dataset_tag}: {len(rows)} rows x {len(seeds)} seeds")
        jobs = [(index, seed) for index in range(len(rows)) for seed in seeds]
        scores = self._map(lambda job: rows[job[0]][2](job[1]), jobs)
        reports = []
        for index, (label, row_config, _) in enumerate(rows):
            run_scores = [score for (row, _), score in zip(jobs, scores) if row == index]
            report = MetricsReport.from_runs(protocol, label, run_scores, seeds, row_config)
            self.logger.info(f"[ROW] {label}: mean_f1={report.mean_f1:.4f} ci95={report.ci95_halfwidth}")
            reports.append(report)
        return ProtocolTable(protocol, setup.dataset_tag, reports, config=self._table_config(setup, seeds))

    @staticmethod
    def _table_config(setup: ExperimentSetup, seeds: Sequence[int]) -> dict:
        return {"pretrain": setup.pretrain.to_dict(), "finetune": setup.finetune.to_dict(),
                "split": asdict(setup.split), "seeds": list(seeds), "preset": setup.preset,
                "run_config": setup.snapshot}

    def _seeds(self, setup: ExperimentSetup, seeds: Optional[Sequence[int]]) -> List[int]:
        seeds = list(setup.seeds if seeds is None else seeds)
        if not seeds:
            raise ConfigError("at least one seed is required", key_path="seeds")
        return seeds

    # ------------------------------------------------------------- protocols

    def run_strategy_comparison(self, setup: ExperimentSetup, strategies: Dict[str, StrategyConfig] = None,
                                seeds: Sequence[int] = None) -> ProtocolTable:
        """
        Every masking strategy plus the supervised baseline, one row each.

        Args:
            setup (ExperimentSetup): Dataset and schedules
            strategies (Dict[str, StrategyConfig], optional): Row label -> strategy.
                Defaults to comparison_strategies(K, setup.pretrain.strategy).
            seeds (Sequence[int], optional): Defaults to setup.seeds

        Returns:
            ProtocolTable: Strategy rows in the order given, then 'supervised'
        """
        seeds = self._seeds(setup, seeds)
        strategies = strategies or comparison_strategies(setup.channel_count, setup.pretrain.strategy)
        for label, strategy in strategies.items():
            if strategy.kind not in MASKING_KINDS:
                raise ConfigError(f"unknown masking strategy '{strategy.kind}'", key_path="strategy.kind")
            validate_strategy(strategy, setup.channel_count)
        rows = [(label, {"strategy": strategy.to_dict()},
                 lambda seed, s=strategy, tag=label: self._self_supervised_run(setup, s, seed, log_tag=tag))
                for label, strategy in strategies.items()]
        rows.append((SUPERVISED, {"strategy": None}, lambda seed: self._supervised_run(setup, seed)))
        return self._fold(STRATEGY_COMPARISON, setup, seeds, rows)

    def run_semi_supervised_sweep(self, setup: ExperimentSetup, x_values: Sequence[int] = SEMI_SUPERVISED_X_VALUES,
                                  strategy: StrategyConfig = None, seeds: Sequence[int] = None,
                                  include_supervised: bool = True) -> ProtocolTable:
        """
        Downstream training on x labeled windows per class, evaluated on the full test split.

        One encoder is pretrained per seed (on all unlabeled training windows)
        and reused for every x.

        Returns:
            ProtocolTable: Rows 'self_supervised x=<x>' then, optionally, 'supervised x=<x>'
        """
        if not x_values:
            raise ConfigError("x values must not be empty", key_path="protocol.x_values")
        seeds = self._seeds(setup, seeds)
        strategy = strategy or setup.pretrain.strategy
        validate_strategy(strategy, setup.channel_count)

        def seed_runs(seed: int) -> Dict[Tuple[str, int], RunScore]:
            data = self.prepare(setup, seed)
            run_log = self.run_log.bind(seed=seed)
            checkpoint = self.pretrain(setup, data, strategy, seed, run_log=run_log.bind(row=SELF_SUPERVISED,
                                                                                         stage="pretrain"))
            results = {}
            for x in x_values:
                tag = f"x={x}"
                params = self.finetune(setup, data, checkpoint, seed, x=x,
                                       run_log=run_log.bind(row=f"{SELF_SUPERVISED} {tag}", stage="finetune"))
                results[(SELF_SUPERVISED, x)] = evaluate(params, data.test)
                if include_supervised:
                    params = self.finetune(setup, data, None, seed, x=x,
                                           run_log=run_log.bind(row=f"{SUPERVISED} {tag}", stage="finetune"))
                    results[(SUPERVISED, x)] = evaluate(params, data.test)
            return results

        self.logger.info(f"[PROTOCOL] {SEMI_SUPERVISED} on {setup.dataset_tag}: x={list(x_values)}, seeds={seeds}")
        per_seed = self._map(seed_runs, seeds)
        paradigms = [SELF_SUPERVISED, SUPERVISED] if include_supervised else [SELF_SUPERVISED]
        reports = []
        for paradigm in paradigms:
            for x in x_values:
                row_config = {"paradigm": paradigm, "x": x,
                              "strategy": strategy.to_dict() if paradigm == SELF_SUPERVISED else None}
                report = MetricsReport.from_runs(SEMI_SUPERVISED, f"{paradigm} x={x}",
                                                 [results[(paradigm, x)] for results in per_seed], seeds, row_config)
                self.logger.info(f"[ROW] {report.label}: mean_f1={report.mean_f1:.4f} ci95={report.ci95_halfwidth}")
                reports.append(report)
        return ProtocolTable(SEMI_SUPERVISED, setup.dataset_tag, reports, config=self._table_config(setup, seeds))

    def run_alpha_sweep(self, setup: ExperimentSetup, alpha_values: Sequence[float] = ALPHA_VALUES,
                        strategy: StrategyConfig = None, seeds: Sequence[int] = None) -> ProtocolTable:
        """Time-channel pretraining with each loss weight alpha. Rows 'alpha=<a>'."""
        seeds = self._seeds(setup, seeds)
        strategy = strategy or alpha_sweep_strategy(setup.channel_count, setup.pretrain.strategy)
        validate_strategy(strategy, setup.channel_count)
        for alpha in alpha_values:
            if not 0.0 <= alpha <= 1.0:
                raise ConfigError(f"alpha must be in [0, 1], got {alpha}", key_path="alpha")
        rows = [(f"alpha={alpha}", {"strategy": strategy.to_dict(), "alpha": alpha},
                 lambda seed, a=alpha: self._self_supervised_run(setup, strategy, seed, alpha=a,
                                                                 log_tag=f"alpha={a}"))
                for alpha in alpha_values]
        return self._fold(ALPHA_SWEEP, setup, seeds, rows)

    def run_ratio_sweep(self, setup: ExperimentSetup, axis: str, values: Sequence = None,
                        seeds: Sequence[int] = None) -> ProtocolTable:
        """
        Masking-size sweep along one axis.

        Args:
            axis (str): 'time_ratio' (Time Masking with each ratio) or
                'channel_count' (Channel Masking with each count; counts above K are skipped)
            values (Sequence, optional): Grid. Defaults to the axis grid.

        Returns:
            ProtocolTable: Rows '<axis>=<value>'
        """
        seeds = self._seeds(setup, seeds)
        base = setup.pretrain.strategy.with_overrides(channel_ratio=None)
        if axis == "time_ratio":
            protocol, values = TIME_RATIO_SWEEP, TIME_RATIO_VALUES if values is None else values
            strategies = [(v, base.with_overrides(kind=TIME_MASKING, time_ratio=float(v))) for v in values]
        elif axis == "channel_count":
            protocol, values = CHANNEL_COUNT_SWEEP, CHANNEL_COUNT_VALUES if values is None else values
            strategies = []
            for v in values:
                if int(v) > setup.channel_count:
                    self.logger.warning(f"[SKIP] channel_count={v} exceeds the {setup.channel_count} channels")
                    continue
                strategies.append((int(v), base.with_overrides(kind=CHANNEL_MASKING, channel_count_masked=int(v))))
        else:
            raise ConfigError(f"unknown ratio axis '{axis}'", key_path="protocol.axis")
        rows = [(f"{axis}={v}", {"strategy": s.to_dict()},
                 lambda seed, s=s, tag=f"{axis}={v}": self._self_supervised_run(setup, s, seed, log_tag=tag))
                for v, s in strategies]
        if not rows:
            raise ConfigError(f"no {axis} value fits {setup.channel_count} channels", key_path="protocol.values")
        return self._fold(protocol, setup, seeds, rows)

    def run_anomaly_eval(self, self_supervised: ModelParams, supervised: ModelParams, test: WindowSet,
                         m_values: Sequence[int] = ANOMALY_M_VALUES, seeds: Sequence[int] = DEFAULT_SEEDS,
                         dataset_tag: str = "dataset", config: dict = None) -> ProtocolTable:
        """
        Evaluate two trained classifiers on a test set with m channels stuck at 0.

        Each seed draws its own faulty channels; m=0 is the clean test set.

        Returns:
            ProtocolTable: Rows 'self_supervised m=<m>' and 'supervised m=<m>' for every m
        """
        seeds = list(seeds)
        m_values = self._anomaly_counts(m_values, test.channel_count)
        rows = []
        for m in m_values:
            for paradigm, params in ((SELF_SUPERVISED, self_supervised), (SUPERVISED, supervised)):
                runs = [evaluate(params, inject_channel_anomaly(test, m, seed)) for seed in seeds]
                rows.append(MetricsReport.from_runs(ANOMALY, f"{paradigm} m={m}", runs, seeds,
                                                    {"paradigm": paradigm, "m": m}))
        return ProtocolTable(ANOMALY, dataset_tag, rows, config=config or {"seeds": seeds})

    def run_anomaly_protocol(self, setup: ExperimentSetup, m_values: Sequence[int] = ANOMALY_M_VALUES,
                             seeds: Sequence[int] = None) -> ProtocolTable:
        """
        Train both paradigms on clean data per seed, then evaluate them under channel anomalies.

        Pretraining uses channel masking of 3 channels (fewer when K < 3).
        """
        seeds = self._seeds(setup, seeds)
        m_values = self._anomaly_counts(m_values, setup.channel_count)
        strategy = setup.pretrain.strategy.with_overrides(
            kind=CHANNEL_MASKING, channel_ratio=None,
            channel_count_masked=min(ANOMALY_PRETRAIN_CHANNELS, setup.channel_count))

        def seed_runs(seed: int) -> Dict[Tuple[str, int], RunScore]:
            data = self.prepare(setup, seed)
            run_log = self.run_log.bind(seed=seed)
            checkpoint = self.pretrain(setup, data, strategy, seed,
                                       run_log=run_log.bind(row=SELF_SUPERVISED, stage="pretrain"))
            models = {SELF_SUPERVISED: self.finetune(setup, data, checkpoint, seed,
                                                     run_log=run_log.bind(row=SELF_SUPERVISED, stage="finetune")),
                      SUPERVISED: self.finetune(setup, data, None, seed,
                                                run_log=run_log.bind(row=SUPERVISED, stage="finetune"))}
            return {(paradigm, m): evaluate(params, inject_channel_anomaly(data.test, m, seed))
                    for m in m_values for paradigm, params in models.items()}

        self.logger.info(f"[PROTOCOL] {ANOMALY} on {setup.dataset_tag}: m={m_values}, seeds={seeds}")
        per_seed = self._map(seed_runs, seeds)
        rows = []
        for m in m_values:
            for paradigm in (SELF_SUPERVISED, SUPERVISED):
                report = MetricsReport.from_runs(ANOMALY, f"{paradigm} m={m}",
                                                 [results[(paradigm, m)] for results in per_seed], seeds,
                                                 {"paradigm": paradigm, "m": m,
                                                  "strategy": strategy.to_dict() if paradigm == SELF_SUPERVISED
                                                  else None})
                self.logger.info(f"[ROW] {report.label}: mean_f1={report.mean_f1:.4f} ci95={report.ci95_halfwidth}")
                rows.append(report)
        return ProtocolTable(ANOMALY, setup.dataset_tag, rows, config=self._table_config(setup, seeds))

    def _anomaly_counts(self, m_values: Sequence[int], channel_count: int) -> List[int]:
        kept = []
        for m in m_values:
            if not 0 <= int(m) <= channel_count:
                self.logger.warning(f"[SKIP] anomaly m={m} outside [0, {channel_count}]")
                continue
            kept.append(int(m))
        if not kept:
            raise ConfigError(f"no anomaly count fits {channel_count} channels", key_path="protocol.values")
        return kept

    def run_trick_comparison(self, setup: ExperimentSetup, strategy: StrategyConfig = None,
                             seeds: Sequence[int] = None, modes: Sequence[str] = TRICK_VALUES) -> ProtocolTable:
        """
        Same-position against different-position masking with paired seeds.

        Returns:
            ProtocolTable: Rows 'Same' and 'Different' (in the order of modes)
        """
        seeds = self._seeds(setup, seeds)
        strategy = strategy or trick_strategy(setup.channel_count, setup.preset, setup.pretrain.strategy)
        if strategy.kind != TIME_CHANNEL_MASKING:
            raise ConfigError(f"trick comparison needs '{TIME_CHANNEL_MASKING}' masking, got '{strategy.kind}'",
                              key_path="strategy.kind")
        validate_strategy(strategy, setup.channel_count)
        rows = []
        for mode in modes:
            if mode not in TRICK_LABELS:
                raise ConfigError(f"unknown masking position mode '{mode}'", key_path="protocol.values")
            variant = strategy.with_overrides(same_position_per_batch=(mode == "same"))
            rows.append((TRICK_LABELS[mode], {"strategy": variant.to_dict()},
                         lambda seed, s=variant, tag=TRICK_LABELS[mode]: self._self_supervised_run(
                             setup, s, seed, log_tag=tag)))
        return self._fold(TRICK_COMPARISON, setup, seeds, rows)
