"""
Window preparation: sliding-window segmentation, subject-disjoint splits,
per-channel normalization, per-class label subsampling and channel-anomaly
injection.

All randomized operations are pure functions of their inputs and seed.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from data_science.src.data.recordings import RawRecording, SensorWindow, WindowSet
from data_science.src.errors import ConfigError, ProtocolError
from data_science.src.utils import round_half_up

STD_FLOOR = 1e-8


def segment(rec: RawRecording, window_len: int, overlap_fraction: float) -> List[SensorWindow]:
    """
    Cut a recording into fixed-length overlapping windows.

    Args:
        rec (RawRecording): Source recording of length L
        window_len (int): Window length N (>= 2)
        overlap_fraction (float): Overlap in [0, 1)

    Returns:
        List[SensorWindow]: floor((L - N) / s) + 1 windows at stride
                            s = max(1, round(N * (1 - overlap))), or [] when L < N
    """
    if window_len < 2:
        raise ValueError(f"Window length must be >= 2, got {window_len}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(f"Overlap fraction must be in [0, 1), got {overlap_fraction}")
    stride = max(1, round_half_up(window_len * (1.0 - overlap_fraction)))
    if rec.length < window_len:
        return []
    starts = range(0, rec.length - window_len + 1, stride)
    return [SensorWindow(rec.samples[s:s + window_len], rec.activity_label, rec.subject_id) for s in starts]


def segment_recordings(recordings: Sequence[RawRecording], window_len: int, overlap_fraction: float,
                       num_classes: int = None) -> WindowSet:
    """
    Segment every recording and collect the windows into one WindowSet.

    Args:
        recordings (Sequence[RawRecording]): Recordings sharing one channel count
        window_len (int): Window length N
        overlap_fraction (float): Overlap in [0, 1)
        num_classes (int, optional): Class count A. Defaults to max label + 1.

    Returns:
        WindowSet: Windows in recording order
    """
    if not recordings:
        raise ValueError("No recordings to segment")
    channel_counts = {rec.channel_count for rec in recordings}
    if len(channel_counts) != 1:
        raise ValueError(f"Recordings disagree on channel count: {sorted(channel_counts)}")
    if num_classes is None:
        num_classes = max(rec.activity_label for rec in recordings) + 1
    windows = [w for rec in recordings for w in segment(rec, window_len, overlap_fraction)]
    return WindowSet(windows, num_classes=num_classes, channel_count=channel_counts.pop(), window_length=window_len)


class SplitPolicy(str, Enum):
    EXPLICIT = "explicit-subject-lists"
    RANDOM_FRACTION = "random-subject-fraction"


@dataclass(frozen=True)
class SplitSpec:
    """How subjects are assigned to train / validation / test."""
    policy: SplitPolicy = SplitPolicy.RANDOM_FRACTION
    test_subjects: Tuple[str, ...] = ()
    val_subjects: Tuple[str, ...] = ()
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policy", SplitPolicy(self.policy))
        object.__setattr__(self, "test_subjects", tuple(str(s) for s in self.test_subjects))
        object.__setattr__(self, "val_subjects", tuple(str(s) for s in self.val_subjects))
        if self.policy == SplitPolicy.EXPLICIT and set(self.test_subjects) & set(self.val_subjects):
            raise ConfigError("test and validation subject lists overlap", key_path="split")
        if not (0.0 <= self.test_fraction < 1.0 and 0.0 <= self.val_fraction < 1.0):
            raise ConfigError("fractions must be in [0, 1)", key_path="split")


def split_by_subject(ws: WindowSet, spec: SplitSpec) -> Tuple[WindowSet, WindowSet, WindowSet]:
    """
    Partition windows into subject-disjoint train, validation and test sets.

    The random-fraction policy draws whole subjects: round-half-up(test_fraction * S)
    test subjects first, then round-half-up(val_fraction * remaining) validation
    subjects from the remainder.

    Args:
        ws (WindowSet): All windows
        spec (SplitSpec): Split policy

    Returns:
        Tuple[WindowSet, WindowSet, WindowSet]: (train, val, test), each keeping ws order

    Raises:
        ConfigError: An explicitly listed subject does not occur in ws
    """
    subjects = ws.subjects()
    if spec.policy == SplitPolicy.EXPLICIT:
        unknown = [s for s in (*spec.test_subjects, *spec.val_subjects) if s not in subjects]
        if unknown:
            raise ConfigError(f"unknown subject ids {unknown}", key_path="split")
        test, val = set(spec.test_subjects), set(spec.val_subjects)
    else:
        rng = np.random.default_rng(spec.seed)
        pool = sorted(subjects)
        order = rng.permutation(len(pool))
        n_test = round_half_up(spec.test_fraction * len(pool))
        test = {pool[i] for i in order[:n_test]}
        rest = [pool[i] for i in order[n_test:]]
        n_val = round_half_up(spec.val_fraction * len(rest))
        val = {rest[i] for i in rng.permutation(len(rest))[:n_val]}

    def pick(keep) -> WindowSet:
        return ws.subset([i for i, w in enumerate(ws.windows) if keep(w.subject_id)])

    return (pick(lambda s: s not in test and s not in val),
            pick(lambda s: s in val),
            pick(lambda s: s in test))


@dataclass(frozen=True)
class ChannelStatistics:
    """Per-channel mean and standard deviation fitted on training windows."""
    mean: np.ndarray
    std: np.ndarray = field(repr=False)

    @classmethod
    def fit(cls, train: WindowSet) -> "ChannelStatistics":
        if len(train) == 0:
            raise ValueError("Cannot fit normalization statistics on an empty training set")
        flat = train.values().reshape(-1, train.channel_count)
        std = flat.std(axis=0)
        return cls(mean=flat.mean(axis=0), std=np.where(std < STD_FLOOR, 1.0, std))

    def transform(self, ws: WindowSet) -> WindowSet:
        if len(ws) == 0:
            return ws
        return ws.with_values((ws.values() - self.mean) / self.std)


def normalize(train: WindowSet, others: Sequence[WindowSet]) -> Tuple[WindowSet, List[WindowSet]]:
    """
    Z-score every channel with statistics computed on the training windows.

    Channels whose training std falls below 1e-8 use std = 1.

    Args:
        train (WindowSet): Training windows (nonempty)
        others (Sequence[WindowSet]): Sets transformed with the training statistics

    Returns:
        Tuple[WindowSet, List[WindowSet]]: Normalized train set and others, same shapes
    """
    stats = ChannelStatistics.fit(train)
    return stats.transform(train), [stats.transform(ws) for ws in others]


def sample_per_class(train: WindowSet, x: int, seed: int) -> WindowSet:
    """
    Keep at most x windows of every class, drawn uniformly without replacement.

    Args:
        train (WindowSet): Labeled training windows
        x (int): Windows per class (positive)
        seed (int): Sampling seed

    Returns:
        WindowSet: min(x, class size) windows per class, in train order

    Raises:
        ProtocolError: A class has no windows
    """
    if x < 1:
        raise ValueError(f"Per-class sample size must be positive, got {x}")
    rng = np.random.default_rng(seed)
    labels = train.labels()
    chosen = []
    for c in range(train.num_classes):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise ProtocolError(f"class {c} has no training windows")
        chosen.extend(rng.choice(members, size=min(x, members.size), replace=False).tolist())
    return train.subset(sorted(chosen))


def choose_anomaly_channels(channel_count: int, m: int, seed: int) -> np.ndarray:
    """Channels zeroed by inject_channel_anomaly for the given seed, sorted."""
    if not 0 <= m <= channel_count:
        raise ValueError(f"Anomaly channel count must be in [0, {channel_count}], got {m}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(channel_count, size=m, replace=False))


def inject_channel_anomaly(ws: WindowSet, m: int, seed: int) -> WindowSet:
    """
    Simulate m faulty sensor channels reading a constant 0.

    One channel draw is made per call and applied to every window.

    Args:
        ws (WindowSet): Normalized windows
        m (int): Number of faulty channels, 0 <= m <= K
        seed (int): Channel-choice seed

    Returns:
        WindowSet: Copy of ws with the chosen channel columns set to 0
    """
    channels = choose_anomaly_channels(ws.channel_count, m, seed)
    if m == 0 or len(ws) == 0:
        return ws
    values = ws.values()
    values[:, :, channels] = 0.0
    return ws.with_values(values)
