import json
import math
import hashlib
from typing import Dict, Iterable

import numpy as np

# masking strategy kinds
TIME_MASKING = "time"
SPAN_MASKING = "span"
CHANNEL_MASKING = "channel"
TIME_CHANNEL_MASKING = "time-channel"
SPAN_CHANNEL_MASKING = "span-channel"
MASKING_KINDS = (TIME_MASKING, SPAN_MASKING, CHANNEL_MASKING, TIME_CHANNEL_MASKING, SPAN_CHANNEL_MASKING)

# downstream paradigm without pretraining
SUPERVISED = "supervised"

# protocol grids
SEMI_SUPERVISED_X_VALUES = (1, 2, 5, 10, 25, 50, 100)
ALPHA_VALUES = (0.1, 0.3, 0.5, 0.7, 0.9)
TIME_RATIO_VALUES = (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9)
CHANNEL_COUNT_VALUES = (1, 2, 3, 4, 5)
ANOMALY_M_VALUES = (1, 3, 5)
TRICK_VALUES = ("same", "different")

# protocol tags
PRETRAIN = "pretrain"
FINETUNE = "finetune"
SYNTH = "synth"
STRATEGY_COMPARISON = "strategy_comparison"
SEMI_SUPERVISED = "semi_supervised"
ALPHA_SWEEP = "alpha_sweep"
TIME_RATIO_SWEEP = "time_ratio_sweep"
CHANNEL_COUNT_SWEEP = "channel_count_sweep"
ANOMALY = "anomaly"
TRICK_COMPARISON = "trick_comparison"

# paradigm of a protocol row
SELF_SUPERVISED = "self_supervised"


def round_half_up(value: float) -> int:
    """
    Round to the nearest integer with halves going up.

    Examples:
        >>> round_half_up(2.5)
        3
        >>> round_half_up(0.49)
        0
    """
    return int(math.floor(value + 0.5))


def ratio_to_count(ratio: float, size: int) -> int:
    """
    Convert a masking ratio into an index count over an axis of the given size.

    Args:
        ratio (float): Fraction in [0, 1]
        size (int): Axis length

    Returns:
        int: 0 when ratio is 0, otherwise round-half-up(ratio * size) clamped to [1, size]
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"Ratio must be in [0, 1], got {ratio}")
    if ratio == 0.0 or size == 0:
        return 0
    return min(size, max(1, round_half_up(ratio * size)))


def hash_arrays(arrays: Dict[str, np.ndarray], names: Iterable[str] = None) -> str:
    """
    Content hash over named arrays (name, shape and float64 bytes, in sorted name order).

    Args:
        arrays (Dict[str, np.ndarray]): Arrays to hash
        names (Iterable[str], optional): Subset of names to include. Defaults to all.

    Returns:
        str: Hex SHA-256 digest
    """
    digest = hashlib.sha256()
    for name in sorted(arrays if names is None else names):
        array = np.ascontiguousarray(arrays[name], dtype='<f8')
        digest.update(name.encode('utf-8'))
        digest.update(str(array.shape).encode('utf-8'))
        digest.update(array.tobytes())
    return digest.hexdigest()


def json_snapshot(value):
    """JSON-native copy of a config value (tuples become lists, str enums their values)."""
    return json.loads(json.dumps(value, sort_keys=True))
