import argparse
import json
import sys
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import List, Sequence, Tuple

import pandas as pd
import yaml

from utils import load_env_variables, create_logger

load_env_variables()
from data_science.src.config.run_config import RunConfig, load_run_config, flatten_defaults
from data_science.src.data.recordings import CsvSchema, RawRecording, WindowSet, load_csv, write_csv
from data_science.src.data.synthetic import generate_from_config
from data_science.src.data.windowing import segment_recordings, sample_per_class
from data_science.src.errors import ChannelMaskError, ConfigError, DataError
from data_science.src.evaluation.metrics import MetricsReport, evaluate
from data_science.src.evaluation.reports import ProtocolTable, write_report
from data_science.src.model.checkpoint import load_checkpoint
from data_science.src.model.pipeline.pipeline_manager import ExperimentSetup, PipelineManager
from data_science.src.tuning.fine_tuner import FineTuner, PRETRAINED_ENCODER
from data_science.src.tuning.pretrainer import Pretrainer, reconstruction_error
from data_science.src.tuning.run_log import RunLog
from data_science.src.utils import (SYNTH, PRETRAIN, FINETUNE, STRATEGY_COMPARISON, SEMI_SUPERVISED, ALPHA_SWEEP,
                                    TIME_RATIO_SWEEP, CHANNEL_COUNT_SWEEP, ANOMALY, TRICK_COMPARISON,
                                    SELF_SUPERVISED, SUPERVISED)

CONFIG_SNAPSHOT = "config.snapshot"
RUN_LOG = "run.ndjson"
METADATA = "metadata.json"
REPORT_STEM = "report"
CHECKPOINTS_DIR = "checkpoints"

SWEEP_AXES = {
    "x": SEMI_SUPERVISED,
    "alpha": ALPHA_SWEEP,
    "time_ratio": TIME_RATIO_SWEEP,
    "channel_count": CHANNEL_COUNT_SWEEP,
    "trick": TRICK_COMPARISON,
    "anomaly": ANOMALY,
}
EVAL_PROTOCOLS = (STRATEGY_COMPARISON, SEMI_SUPERVISED)


# ---------------------------------------------------------------- plumbing

def load_recordings(config: RunConfig) -> List[RawRecording]:
    """Generate or read the recordings a run config names."""
    dataset = config.dataset
    if dataset.is_synthetic:
        return generate_from_config(dataset.synthetic)
    if dataset.channel_columns:
        schema = CsvSchema(tuple(dataset.channel_columns), dataset.subject_column, dataset.label_column)
    elif (dataset.subject_column, dataset.label_column) == ("subject", "label"):
        schema = None
    else:
        raise ConfigError("channel_columns is required with custom subject/label columns",
                          key_path="dataset.channel_columns")
    recordings = load_csv(dataset.source, schema, dataset.sample_rate_hz)
    if not recordings:
        raise DataError(f"{dataset.source} holds no samples")
    return recordings


def load_windows(config: RunConfig) -> WindowSet:
    """Segment the configured dataset into windows and check it against the declared counts."""
    recordings = load_recordings(config)
    try:
        windows = segment_recordings(recordings, config.window.length, config.window.overlap,
                                     num_classes=config.dataset.num_classes)
    except ValueError as e:
        raise ConfigError(str(e), key_path="dataset", cause=e)
    if len(windows) == 0:
        raise DataError(f"every recording is shorter than the {config.window.length}-sample window")
    expected = config.dataset.channel_count
    if expected is not None and windows.channel_count != expected:
        raise ConfigError(f"dataset has {windows.channel_count} channels, config declares {expected}",
                          key_path="dataset.channel_count")
    return windows


def build_setup(config: RunConfig, windows: WindowSet) -> ExperimentSetup:
    return ExperimentSetup(windows=windows, split=config.split.to_spec(config.seeds[0]),
                           pretrain=config.pretrain_config(), finetune=config.finetune_config(),
                           seeds=tuple(config.seeds), dataset_tag=config.dataset_tag, preset=config.dataset.preset,
                           snapshot=config.to_dict())


def create_run_dir(config: RunConfig, protocol: str, run_name: str = None) -> Path:
    """`<outdir>/<protocol>/<run name or timestamp>/`; timestamped names never reuse a directory."""
    base = config.resolved_output_dir / protocol
    if run_name:
        run_dir = base / run_name
    else:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        run_dir, suffix = base / stamp, 1
        while run_dir.exists():
            run_dir, suffix = base / f"{stamp}-{suffix}", suffix + 1
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create output directory {run_dir}: {e}", cause=e)
    return run_dir


def write_metadata(run_dir: Path, command: str, argv: Sequence[str], started_at: datetime, **extra):
    """Timestamps and invocation details, kept apart from the reproducible outputs."""
    metadata = {"command": command, "argv": list(argv), "started_at": started_at.isoformat(),
                "finished_at": datetime.now().isoformat(), **extra}
    (run_dir / METADATA).write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def parse_values(tokens: Sequence[str]) -> list:
    """YAML-parse every `--values` token (commas split a single token too)."""
    values = []
    for token in tokens:
        for part in str(token).split(","):
            if part.strip():
                values.append(yaml.safe_load(part.strip()))
    if not values:
        raise ConfigError("no values given", key_path="--values")
    return values


# ---------------------------------------------------------------- commands

def cmd_synth(args, config: RunConfig, logger) -> Tuple[Path, str]:
    """Write a synthetic recordings CSV and a manifest holding the generator parameters."""
    run_dir = create_run_dir(config, SYNTH, args.run_name)
    params = config.dataset.synthetic
    recordings = generate_from_config(params)
    csv_path = write_csv(recordings, run_dir / "recordings.csv")
    manifest = {"seed": params.seed, "params": asdict(params), "recordings": len(recordings), "csv": csv_path.name}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"[SUCCESS] {len(recordings)} recordings written to {csv_path}")
    return run_dir, SYNTH


def cmd_pretrain(args, config: RunConfig, logger) -> Tuple[Path, str]:
    """Pretrain on the training split of the first seed; checkpoint, loss curve and run log."""
    windows = load_windows(config)
    run_dir = create_run_dir(config, PRETRAIN, args.run_name)
    seed = config.seeds[0]
    manager = PipelineManager(config.encoder, logger=logger)
    data = manager.prepare(build_setup(config, windows), seed)

    result = Pretrainer(config.encoder, logger=logger).pretrain(
        config.pretrain_config(seed), data.train, checkpoint_path=run_dir / CHECKPOINTS_DIR / "pretrained.ckpt",
        run_log=RunLog(run_dir / RUN_LOG))
    pd.DataFrame([{"epoch": epoch, **loss.to_dict()} for epoch, loss in enumerate(result.loss_curve, start=1)]) \
        .to_csv(run_dir / "loss_curve.csv", index=False, float_format="%.17g", lineterminator="\n")
    if len(data.val):
        val_loss = reconstruction_error(result.params, data.val, config.strategy, config.alpha, seed)
        logger.info(f"[VALIDATION] reconstruction combined={val_loss.combined:.6f} "
                    f"time={val_loss.loss_time} channel={val_loss.loss_channel}")
    logger.info(f"[SUCCESS] Pretraining finished, checkpoint at {result.checkpoint_path}")
    return run_dir, PRETRAIN


def cmd_finetune(args, config: RunConfig, logger) -> Tuple[Path, str]:
    """Train a classifier (on a pretrained checkpoint or from scratch) and report its test F1."""
    windows = load_windows(config)
    seed = config.seeds[0]
    cfg = config.finetune_config(seed)
    checkpoint = None
    if cfg.resolved_encoder_init == PRETRAINED_ENCODER:
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for a pretrained encoder", key_path="finetune.encoder_init")
        checkpoint = load_checkpoint(args.checkpoint, channel_count=windows.channel_count,
                                     num_classes=windows.num_classes)
    run_dir = create_run_dir(config, FINETUNE, args.run_name)
    manager = PipelineManager(config.encoder, logger=logger)
    data = manager.prepare(build_setup(config, windows), seed)
    labeled = data.train
    if config.finetune.labeled_per_class is not None:
        labeled = sample_per_class(data.train, config.finetune.labeled_per_class, seed)

    result = FineTuner(config.encoder, logger=logger).finetune(
        checkpoint, cfg, labeled, val=data.val if len(data.val) else None, run_log=RunLog(run_dir / RUN_LOG),
        checkpoint_path=run_dir / CHECKPOINTS_DIR / "classifier.ckpt")
    label = SELF_SUPERVISED if checkpoint is not None else SUPERVISED
    report = MetricsReport.from_runs(FINETUNE, label, [evaluate(result.params, data.test)], [seed],
                                     {"finetune": cfg.to_dict(), "checkpoint": args.checkpoint})
    write_report(ProtocolTable(FINETUNE, config.dataset_tag, [report], config.to_dict()), run_dir, REPORT_STEM)
    logger.info(f"[SUCCESS] {label} classifier: test mean F1 = {report.mean_f1:.4f}")
    return run_dir, FINETUNE


def cmd_eval(args, config: RunConfig, logger) -> Tuple[Path, str]:
    """Evaluate a classifier checkpoint, or run one of the top-level protocol tables."""
    windows = load_windows(config)
    setup = build_setup(config, windows)
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint, channel_count=windows.channel_count,
                                 num_classes=windows.num_classes)
        protocol = "eval"
        run_dir = create_run_dir(config, protocol, args.run_name)
        manager = PipelineManager(config.encoder, logger=logger)
        seed = config.seeds[0]
        report = MetricsReport.from_runs(protocol, "checkpoint", [evaluate(params, manager.prepare(setup, seed).test)],
                                         [seed], {"checkpoint": args.checkpoint})
        table = ProtocolTable(protocol, config.dataset_tag, [report], config.to_dict())
    else:
        protocol = args.protocol or (config.protocol.name if config.protocol.name in EVAL_PROTOCOLS
                                     else STRATEGY_COMPARISON)
        run_dir = create_run_dir(config, protocol, args.run_name)
        manager = PipelineManager(config.encoder, logger=logger, workers=args.workers or config.protocol.workers,
                                  run_log=RunLog(run_dir / RUN_LOG))
        if protocol == STRATEGY_COMPARISON:
            table = manager.run_strategy_comparison(setup)
        else:
            table = manager.run_semi_supervised_sweep(setup, config.protocol.x_values, strategy=config.strategy)
    write_report(table, run_dir, REPORT_STEM)
    logger.info(f"[SUCCESS] {protocol} report written to {run_dir}")
    return run_dir, protocol


def cmd_sweep(args, config: RunConfig, logger) -> Tuple[Path, str]:
    """Run one protocol over every value of its grid."""
    protocol = SWEEP_AXES[args.axis]
    grids = {"x": config.protocol.x_values, "alpha": config.protocol.alpha_values,
             "time_ratio": config.protocol.time_ratio_values, "channel_count": config.protocol.channel_count_values,
             "trick": config.protocol.trick_values, "anomaly": config.protocol.anomaly_m_values}
    values = parse_values(args.values) if args.values else list(grids[args.axis])
    windows = load_windows(config)
    setup = build_setup(config, windows)
    run_dir = create_run_dir(config, protocol, args.run_name)
    manager = PipelineManager(config.encoder, logger=logger, workers=args.workers or config.protocol.workers,
                              run_log=RunLog(run_dir / RUN_LOG))
    logger.info(f"[SWEEP] axis={args.axis} values={values}")

    if args.axis == "x":
        table = manager.run_semi_supervised_sweep(setup, [int(v) for v in values], strategy=config.strategy)
    elif args.axis == "alpha":
        table = manager.run_alpha_sweep(setup, [float(v) for v in values])
    elif args.axis in ("time_ratio", "channel_count"):
        table = manager.run_ratio_sweep(setup, args.axis, values)
    elif args.axis == "trick":
        table = manager.run_trick_comparison(setup, modes=[str(v) for v in values])
    else:
        table = manager.run_anomaly_protocol(setup, [int(v) for v in values])
    write_report(table, run_dir, REPORT_STEM)
    logger.info(f"[SUCCESS] {protocol} report written to {run_dir}")
    return run_dir, protocol


# ------------------------------------------------------------------ parser

def config_keys_help() -> str:
    lines = ["config keys (YAML file or --set key.path=value, defaults shown):"]
    lines += [f"  {key} = {value!r}" for key, value in flatten_defaults()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    epilog = config_keys_help()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='YAML run config file')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one config key (repeatable), e.g. --set pretrain.epochs=30')
    common.add_argument('--outdir', type=str, default=None, help='Output directory (overrides output_dir)')
    common.add_argument('--run-name', type=str, default=None,
                        help='Run directory name (defaults to a timestamp)')

    parser = argparse.ArgumentParser(description='Masked-reconstruction pretraining for multichannel sensor windows',
                                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=epilog,
                                    formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.set_defaults(handler=handler)
        return sub

    add('synth', cmd_synth, 'Generate a synthetic recordings CSV')
    add('pretrain', cmd_pretrain, 'Pretrain the encoder with masked reconstruction')
    finetune = add('finetune', cmd_finetune, 'Train the downstream classifier')
    finetune.add_argument('--checkpoint', type=str, default=None, help='Pretrained checkpoint')
    evaluate_parser = add('eval', cmd_eval, 'Evaluate a classifier or run a protocol table')
    evaluate_parser.add_argument('--checkpoint', type=str, default=None, help='Classifier checkpoint to evaluate')
    evaluate_parser.add_argument('--protocol', choices=EVAL_PROTOCOLS, default=None, help='Protocol table to run')
    evaluate_parser.add_argument('--workers', type=int, default=None, help='Threads for independent runs')
    sweep = add('sweep', cmd_sweep, 'Run a protocol over a grid of values')
    sweep.add_argument('--axis', choices=list(SWEEP_AXES), required=True, help='Sweep axis')
    sweep.add_argument('--values', nargs='+', default=None, help='Grid override, e.g. --values 0.1 0.5')
    sweep.add_argument('--workers', type=int, default=None, help='Threads for independent runs')
    return parser


def main(argv: Sequence[str] = None) -> int:
    """
    MASKED-RECONSTRUCTION PRETRAINING CLI
    =====================================

    USAGE:
    python -m data_science.src.main synth --run-name demo
    python -m data_science.src.main pretrain --config run.yaml --set strategy.kind=time-channel
    python -m data_science.src.main finetune --config run.yaml --checkpoint runs/pretrain/<run>/checkpoints/pretrained.ckpt
    python -m data_science.src.main eval --protocol strategy_comparison
    python -m data_science.src.main sweep --axis alpha --values 0.1 0.5 0.9

    Exit codes: 0 success, 2 config error, 3 data/checkpoint error, 4 numeric error.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logger = create_logger('ChannelMaskCLI', 'channel_mask_cli.log')
    started_at = datetime.now()
    try:
        config = load_run_config(args.config, args.overrides)
        if args.outdir:
            config.output_dir = args.outdir
        logger.info(f"[START] command={args.command}, dataset={config.dataset_tag}, seeds={config.seeds}")
        run_dir, protocol = args.handler(args, config, logger)
        config.dump(run_dir / CONFIG_SNAPSHOT)
        write_metadata(run_dir, args.command, argv, started_at, protocol=protocol)
    except ChannelMaskError as e:
        logger.error(f"[ERROR] {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    logger.info(f"[SUCCESS] {args.command} completed, outputs in {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
