"""
Run configuration: one YAML file mapped onto nested dataclasses.

Resolution order (later wins): dataclass defaults, dataset preset, the YAML
file, `--set key.path=value` overrides. Unknown keys and wrongly typed values
are rejected with their dotted key path.
"""
import copy
import types
from dataclasses import dataclass, field, fields, is_dataclass, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union, get_args, get_origin, get_type_hints

import yaml

from data_science.src.data.synthetic import SyntheticConfig
from data_science.src.data.windowing import SplitPolicy, SplitSpec
from data_science.src.errors import ConfigError
from data_science.src.masking.strategy_config import StrategyConfig
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.objective.losses import DEFAULT_ALPHA
from data_science.src.tuning.fine_tuner import FinetuneConfig
from data_science.src.tuning.pretrainer import PretrainConfig
from data_science.src.utils import (SEMI_SUPERVISED_X_VALUES, ALPHA_VALUES, TIME_RATIO_VALUES, CHANNEL_COUNT_VALUES,
                                    ANOMALY_M_VALUES, TRICK_VALUES, STRATEGY_COMPARISON, SEMI_SUPERVISED,
                                    ALPHA_SWEEP, TIME_RATIO_SWEEP, CHANNEL_COUNT_SWEEP, ANOMALY, TRICK_COMPARISON,
                                    json_snapshot)
from utils import default_output_dir

SCHEMA_VERSION = 1
SYNTHETIC_SOURCE = "synthetic"
PROTOCOLS = (STRATEGY_COMPARISON, SEMI_SUPERVISED, ALPHA_SWEEP, TIME_RATIO_SWEEP, CHANNEL_COUNT_SWEEP, ANOMALY,
             TRICK_COMPARISON)

_RANDOM_SPLIT = {"policy": SplitPolicy.RANDOM_FRACTION.value, "test_fraction": 0.2, "val_fraction": 0.2}
PRESETS: Dict[str, dict] = {
    "usc_had": {
        "dataset": {"sample_rate_hz": 100.0, "num_classes": 12, "channel_count": 6},
        "window": {"length": 100, "overlap": 0.5},
        "split": {"policy": SplitPolicy.EXPLICIT.value, "val_subjects": ["11", "12"], "test_subjects": ["13", "14"]},
    },
    "uci_har": {
        "dataset": {"sample_rate_hz": 50.0, "num_classes": 6, "channel_count": 9},
        "window": {"length": 128, "overlap": 0.5},
        "split": _RANDOM_SPLIT,
    },
    "motion_sense": {
        "dataset": {"sample_rate_hz": 50.0, "num_classes": 6, "channel_count": 6},
        "window": {"length": 50, "overlap": 0.5},
        "split": _RANDOM_SPLIT,
    },
    "synthetic": {
        "dataset": {"source": SYNTHETIC_SOURCE},
        "window": {"length": 50, "overlap": 0.5},
        "split": _RANDOM_SPLIT,
    },
}


@dataclass
class DatasetConfig:
    """Where windows come from: 'synthetic' or the path of a recordings CSV."""
    source: str = SYNTHETIC_SOURCE
    preset: Optional[str] = None
    tag: Optional[str] = None
    sample_rate_hz: float = 50.0
    num_classes: Optional[int] = None
    channel_count: Optional[int] = None
    subject_column: str = "subject"
    label_column: str = "label"
    channel_columns: Optional[List[str]] = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset '{self.preset}', expected one of {sorted(PRESETS)}",
                              key_path="dataset.preset")
        if not self.source:
            raise ConfigError("must name 'synthetic' or a CSV path", key_path="dataset.source")

    @property
    def is_synthetic(self) -> bool:
        return self.source == SYNTHETIC_SOURCE


@dataclass
class WindowConfig:
    length: int = 50
    overlap: float = 0.5

    def __post_init__(self):
        if self.length < 2:
            raise ConfigError(f"must be >= 2, got {self.length}", key_path="window.length")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError(f"must be in [0, 1), got {self.overlap}", key_path="window.overlap")


@dataclass
class SplitConfig:
    policy: str = SplitPolicy.RANDOM_FRACTION.value
    test_subjects: List[str] = field(default_factory=list)
    val_subjects: List[str] = field(default_factory=list)
    test_fraction: float = 0.2
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.policy not in [p.value for p in SplitPolicy]:
            raise ConfigError(f"unknown policy '{self.policy}'", key_path="split.policy")

    def to_spec(self, seed: int = 0) -> SplitSpec:
        return SplitSpec(policy=SplitPolicy(self.policy), test_subjects=tuple(self.test_subjects),
                         val_subjects=tuple(self.val_subjects), test_fraction=self.test_fraction,
                         val_fraction=self.val_fraction, seed=seed)


@dataclass
class PretrainSection:
    epochs: int = 150
    batch_size: int = 256
    lr: float = 1e-3


@dataclass
class FinetuneSection:
    epochs: int = 100
    batch_size: int = 1024
    lr: float = 1e-3
    freeze_encoder: bool = True
    encoder_init: Optional[str] = None
    labeled_per_class: Optional[int] = None


@dataclass
class ProtocolConfig:
    name: str = STRATEGY_COMPARISON
    workers: int = 1
    x_values: List[int] = field(default_factory=lambda: list(SEMI_SUPERVISED_X_VALUES))
    alpha_values: List[float] = field(default_factory=lambda: list(ALPHA_VALUES))
    time_ratio_values: List[float] = field(default_factory=lambda: list(TIME_RATIO_VALUES))
    channel_count_values: List[int] = field(default_factory=lambda: list(CHANNEL_COUNT_VALUES))
    anomaly_m_values: List[int] = field(default_factory=lambda: list(ANOMALY_M_VALUES))
    trick_values: List[str] = field(default_factory=lambda: list(TRICK_VALUES))

    def __post_init__(self):
        if self.name not in PROTOCOLS:
            raise ConfigError(f"unknown protocol '{self.name}', expected one of {list(PROTOCOLS)}",
                              key_path="protocol.name")
        if self.workers < 1:
            raise ConfigError(f"must be >= 1, got {self.workers}", key_path="protocol.workers")


@dataclass
class RunConfig:
    """Everything one run needs; a snapshot of it is stored next to every output."""
    schema_version: int = SCHEMA_VERSION
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    alpha: float = DEFAULT_ALPHA
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}, expected {SCHEMA_VERSION}",
                              key_path="schema_version")
        if not self.seeds:
            raise ConfigError("at least one seed is required", key_path="seeds")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"must be in [0, 1], got {self.alpha}", key_path="alpha")

    @property
    def dataset_tag(self) -> str:
        if self.dataset.tag:
            return self.dataset.tag
        if self.dataset.preset:
            return self.dataset.preset
        return SYNTHETIC_SOURCE if self.dataset.is_synthetic else Path(self.dataset.source).stem

    @property
    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or default_output_dir())

    def pretrain_config(self, seed: int = None, strategy: StrategyConfig = None) -> PretrainConfig:
        return PretrainConfig(epochs=self.pretrain.epochs, batch_size=self.pretrain.batch_size, lr=self.pretrain.lr,
                              strategy=strategy or self.strategy, alpha=self.alpha,
                              seed=self.seeds[0] if seed is None else seed)

    def finetune_config(self, seed: int = None) -> FinetuneConfig:
        return FinetuneConfig(epochs=self.finetune.epochs, batch_size=self.finetune.batch_size, lr=self.finetune.lr,
                              freeze_encoder=self.finetune.freeze_encoder, encoder_init=self.finetune.encoder_init,
                              seed=self.seeds[0] if seed is None else seed)

    def to_dict(self) -> dict:
        return json_snapshot(asdict(self))

    def dump(self, path: str | Path) -> Path:
        """Write the resolved config as YAML (loadable with load_run_config)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True), encoding="utf-8")
        return path


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _type_name(hint) -> str:
    return getattr(hint, "__name__", str(hint))


def _coerce(value: Any, hint, path: str):
    origin, args = get_origin(hint), get_args(hint)
    if origin is Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        return _coerce(value, next(a for a in args if a is not type(None)), path)
    if is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping, got {type(value).__name__}", key_path=path)
        return build_dataclass(hint, value, path)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {type(value).__name__}", key_path=path)
        item_hint = args[0] if args else Any
        items = [_coerce(v, item_hint, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected bool, got {value!r}", key_path=path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected int, got {value!r}", key_path=path)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected float, got {value!r}", key_path=path)
        return float(value)
    if hint is str:
        # subject ids are often written as bare numbers
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise ConfigError(f"expected str, got {value!r}", key_path=path)
        return str(value)
    if hint is Any:
        return value
    raise ConfigError(f"unsupported config type {_type_name(hint)}", key_path=path)


def build_dataclass(cls, data: dict, path: str = ""):
    """
    Instantiate a (possibly nested) config dataclass from a plain mapping.

    Raises:
        ConfigError: Unknown key, wrong type or rejected value, naming the dotted key path
    """
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", key_path=_join(path, key))
    kwargs = {key: _coerce(value, hints[key], _join(path, key)) for key, value in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), key_path=path or None, cause=e)


def deep_merge(base: dict, update: dict) -> dict:
    """Recursive dict merge; update wins, nested mappings are merged key by key."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str) -> Tuple[List[str], Any]:
    """
    Split `key.path=value` into its key path and YAML-parsed value.

    Examples:
        >>> parse_override("pretrain.epochs=30")
        (['pretrain', 'epochs'], 30)
    """
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override '{text}' is not of the form key.path=value", key_path="--set")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value {raw!r}: {e}", key_path=key.strip(), cause=e)
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    data = copy.deepcopy(data)
    for text in overrides:
        keys, value = parse_override(text)
        node = data
        for depth, key in enumerate(keys[:-1]):
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError("is not a section", key_path=".".join(keys[:depth + 1]))
            node = child
        node[keys[-1]] = value
    return data


def read_yaml(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}", cause=e)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return data


def resolve_run_config(data: dict, overrides: Sequence[str] = ()) -> RunConfig:
    """Apply overrides, then fill defaults from the named preset."""
    data = apply_overrides(data, overrides)
    dataset = data.get("dataset")
    preset = dataset.get("preset") if isinstance(dataset, dict) else None
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}",
                              key_path="dataset.preset")
        data = deep_merge(PRESETS[preset], data)
    return build_dataclass(RunConfig, data)


def load_run_config(path: str | Path = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Load a run config file (or the defaults when path is None) and apply `--set` overrides.

    Raises:
        ConfigError: Missing or invalid file, unknown key, wrong type, unknown preset
    """
    return resolve_run_config(read_yaml(path) if path is not None else {}, overrides)


def flatten_defaults(config: RunConfig = None) -> List[Tuple[str, Any]]:
    """Every dotted config key with its value, in declaration order."""
    def walk(node, prefix):
        for key, value in node.items():
            if isinstance(value, dict):
                yield from walk(value, _join(prefix, key))
            else:
                yield _join(prefix, key), value

    return [(key, list(value) if isinstance(value, tuple) else value)
            for key, value in walk(asdict(config or RunConfig()), "")]
