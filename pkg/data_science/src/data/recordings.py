"""
Recording and window containers plus the CSV reader/writer.

CSV layout: a header row with `subject,label,ch0..ch{K-1}`, one sample per row,
rows grouped by recording. A recording is a contiguous run of rows sharing the
same (subject, label) pair.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

from data_science.src.errors import SchemaError, CsvParseError, DataError

DEFAULT_SAMPLE_RATE_HZ = 50.0


@dataclass(frozen=True)
class CsvSchema:
    """Column names of a recordings CSV file."""
    channel_columns: Sequence[str]
    subject_column: str = "subject"
    label_column: str = "label"

    @classmethod
    def default(cls, channel_count: int) -> "CsvSchema":
        return cls(channel_columns=tuple(f"ch{j}" for j in range(channel_count)))

    @classmethod
    def infer(cls, columns: Sequence[str]) -> "CsvSchema":
        """Schema for a file using the default column names, with K taken from the header."""
        channels = [c for c in columns if c.startswith("ch") and c[2:].isdigit()]
        channels.sort(key=lambda c: int(c[2:]))
        return cls(channel_columns=tuple(channels))


@dataclass(frozen=True)
class RawRecording:
    """One uninterrupted stream of K-channel samples from a single subject and activity."""
    subject_id: str
    activity_label: int
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] == 0 or samples.shape[1] == 0:
            raise ValueError(f"Recording samples must be a nonempty L x K matrix, got shape {samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"Sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channel_count(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SensorWindow:
    """A fixed-length N x K segment with its activity label and subject."""
    values: np.ndarray
    label: int
    subject_id: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 1:
            raise ValueError(f"Window must be N x K with N >= 2 and K >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Window contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass
class WindowSet:
    """An ordered collection of windows sharing N and K, with labels in [0, num_classes)."""
    windows: List[SensorWindow]
    num_classes: int
    channel_count: int
    window_length: int = field(default=None)

    def __post_init__(self):
        for window in self.windows:
            n, k = window.values.shape
            if k != self.channel_count:
                raise ValueError(f"Window has {k} channels, set declares {self.channel_count}")
            if self.window_length is None:
                self.window_length = n
            elif n != self.window_length:
                raise ValueError(f"Window length {n} differs from set length {self.window_length}")
            if not 0 <= window.label < self.num_classes:
                raise ValueError(f"Label {window.label} outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.windows)

    def values(self) -> np.ndarray:
        """Stacked window values, shape (B, N, K)."""
        if not self.windows:
            return np.zeros((0, self.window_length or 0, self.channel_count))
        return np.stack([w.values for w in self.windows])

    def labels(self) -> np.ndarray:
        return np.array([w.label for w in self.windows], dtype=np.int64)

    def subjects(self) -> List[str]:
        """Distinct subject ids in first-appearance order."""
        return list(dict.fromkeys(w.subject_id for w in self.windows))

    def subset(self, indices) -> "WindowSet":
        return WindowSet([self.windows[i] for i in indices], self.num_classes, self.channel_count,
                         self.window_length)

    def with_values(self, values: np.ndarray) -> "WindowSet":
        """Same labels and subjects with replaced values, shape (B, N, K)."""
        windows = [SensorWindow(v, w.label, w.subject_id) for v, w in zip(values, self.windows)]
        return WindowSet(windows, self.num_classes, self.channel_count, self.window_length)


def load_csv(path: str | Path, schema: CsvSchema = None,
             sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> List[RawRecording]:
    """
    Read a recordings CSV into RawRecording objects.

    Args:
        path (str | Path): CSV file
        schema (CsvSchema, optional): Column names. Inferred from the header when None.
        sample_rate_hz (float): Sample rate assigned to every recording

    Returns:
        List[RawRecording]: One recording per contiguous (subject, label) run, in file order.
            Integer labels are kept as class ids; any other labels are numbered in first-seen order.

    Raises:
        DataError: File missing or unreadable
        SchemaError: A schema column is missing
        CsvParseError: A channel cell is not a finite real or a label is empty (names the 1-based data row)
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except Exception as e:
        raise DataError(f"Failed to read CSV {path}: {e}", cause=e)

    schema = schema or CsvSchema.infer(frame.columns)
    required = [schema.subject_column, schema.label_column, *schema.channel_columns]
    missing = [c for c in required if c not in frame.columns]
    if missing or not schema.channel_columns:
        raise SchemaError(f"{path}: missing columns {missing or ['ch0']}")
    if frame.empty:
        return []

    channels = frame[list(schema.channel_columns)].apply(pd.to_numeric, errors="coerce").to_numpy(np.float64)
    bad_rows = np.flatnonzero(~np.isfinite(channels).all(axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        bad_column = next(c for c, v in zip(schema.channel_columns, channels[row]) if not np.isfinite(v))
        raise CsvParseError(f"column '{bad_column}' value {frame.at[row, bad_column]!r} is not a finite number",
                            row_number=row + 1)

    raw_labels = frame[schema.label_column].str.strip()
    if (raw_labels == "").any():
        row = int(np.flatnonzero(raw_labels == "")[0])
        raise CsvParseError("label is empty", row_number=row + 1)
    numeric = pd.to_numeric(raw_labels, errors="coerce")
    if numeric.notna().all() and (numeric % 1 == 0).all():
        labels = numeric.astype(np.int64).to_numpy()
    else:
        # named classes get ids in first-seen order
        labels, _ = pd.factorize(raw_labels, sort=False)
        labels = labels.astype(np.int64)
    subjects = frame[schema.subject_column].str.strip().to_numpy()

    # a new run starts wherever (subject, label) differs from the previous row
    run_starts = np.flatnonzero(np.r_[True, (subjects[1:] != subjects[:-1]) | (labels[1:] != labels[:-1])])
    run_ends = np.r_[run_starts[1:], len(frame)]
    return [RawRecording(subject_id=str(subjects[s]), activity_label=int(labels[s]),
                         samples=channels[s:e], sample_rate_hz=sample_rate_hz)
            for s, e in zip(run_starts, run_ends)]


def write_csv(recordings: Sequence[RawRecording], path: str | Path) -> Path:
    """
    Write recordings in the CSV layout read by load_csv.

    Args:
        recordings (Sequence[RawRecording]): Recordings sharing one channel count
        path (str | Path): Output file

    Returns:
        Path: The written file
    """
    if not recordings:
        raise ValueError("No recordings to write")
    channel_count = recordings[0].channel_count
    schema = CsvSchema.default(channel_count)
    frames = []
    for rec in recordings:
        if rec.channel_count != channel_count:
            raise ValueError("All recordings must share the same channel count")
        frame = pd.DataFrame(rec.samples, columns=list(schema.channel_columns))
        frame.insert(0, schema.label_column, rec.activity_label)
        frame.insert(0, schema.subject_column, rec.subject_id)
        frames.append(frame)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-precision floats so a reload is bit-exact
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    return path
