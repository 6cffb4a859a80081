from dataclasses import dataclass, asdict, replace
from typing import Optional, Tuple

import numpy as np

from data_science.src.utils import (MASKING_KINDS, TIME_MASKING, SPAN_MASKING, CHANNEL_MASKING,
                                    TIME_CHANNEL_MASKING, SPAN_CHANNEL_MASKING, ratio_to_count)


@dataclass(frozen=True)
class MaskSpec:
    """
    One mask: time indices T and channel indices C.

    Cell (i, j) of a window is zeroed when i is in T or j is in C. Either set
    may be empty.
    """
    time_indices: Tuple[int, ...] = ()
    channel_indices: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "time_indices", tuple(sorted(int(i) for i in set(self.time_indices))))
        object.__setattr__(self, "channel_indices", tuple(sorted(int(j) for j in set(self.channel_indices))))

    def __str__(self) -> str:
        return (f"T=[{','.join(map(str, self.time_indices))}];"
                f"C=[{','.join(map(str, self.channel_indices))}]")

    @classmethod
    def parse(cls, text: str) -> "MaskSpec":
        """Inverse of str(): 'T=[1,2];C=[0]'."""
        try:
            time_part, channel_part = text.strip().split(";")
            parse_list = lambda part, key: [int(v) for v in part.strip()[len(key) + 2:-1].split(",") if v]
            return cls(parse_list(time_part, "T"), parse_list(channel_part, "C"))
        except ValueError as e:
            raise ValueError(f"Malformed mask spec {text!r}") from e

    @property
    def is_empty(self) -> bool:
        return not self.time_indices and not self.channel_indices

    def validate(self, window_length: int, channel_count: int):
        if any(not 0 <= i < window_length for i in self.time_indices):
            raise ValueError(f"Time index out of range [0, {window_length}) in {self}")
        if any(not 0 <= j < channel_count for j in self.channel_indices):
            raise ValueError(f"Channel index out of range [0, {channel_count}) in {self}")

    def time_cells(self, window_length: int, channel_count: int) -> np.ndarray:
        """Boolean N x K selector of cells on masked time steps."""
        cells = np.zeros((window_length, channel_count), dtype=bool)
        cells[list(self.time_indices), :] = True
        return cells

    def channel_cells(self, window_length: int, channel_count: int) -> np.ndarray:
        """Boolean N x K selector of cells on masked channels."""
        cells = np.zeros((window_length, channel_count), dtype=bool)
        cells[:, list(self.channel_indices)] = True
        return cells

    def cells(self, window_length: int, channel_count: int) -> np.ndarray:
        """Boolean N x K indicator of every zeroed cell (i in T or j in C)."""
        return self.time_cells(window_length, channel_count) | self.channel_cells(window_length, channel_count)


@dataclass(frozen=True)
class StrategyConfig:
    """
    Masking strategy and its sizes.

    channel_ratio, when set, replaces channel_count_masked with
    round-half-up(channel_ratio * K) (minimum 1 for a positive ratio).
    """
    kind: str = CHANNEL_MASKING
    time_ratio: float = 0.10
    span_ratio: float = 0.15
    span_geometric_p: float = 0.2
    span_max_len: int = 10
    channel_count_masked: int = 3
    channel_ratio: Optional[float] = None
    same_position_per_batch: bool = True

    def __post_init__(self):
        if self.kind not in MASKING_KINDS:
            raise ValueError(f"Unknown masking strategy '{self.kind}', expected one of {MASKING_KINDS}")
        for name in ("time_ratio", "span_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.channel_ratio is not None and not 0.0 <= self.channel_ratio <= 1.0:
            raise ValueError(f"channel_ratio must be in [0, 1], got {self.channel_ratio}")
        if not 0.0 < self.span_geometric_p < 1.0:
            raise ValueError(f"span_geometric_p must be in (0, 1), got {self.span_geometric_p}")
        if self.span_max_len < 1:
            raise ValueError(f"span_max_len must be >= 1, got {self.span_max_len}")
        if self.channel_count_masked < 0:
            raise ValueError(f"channel_count_masked must be >= 0, got {self.channel_count_masked}")

    @property
    def masks_time(self) -> bool:
        return self.kind in (TIME_MASKING, TIME_CHANNEL_MASKING)

    @property
    def masks_span(self) -> bool:
        return self.kind in (SPAN_MASKING, SPAN_CHANNEL_MASKING)

    @property
    def masks_channels(self) -> bool:
        return self.kind in (CHANNEL_MASKING, TIME_CHANNEL_MASKING, SPAN_CHANNEL_MASKING)

    def channel_count_for(self, channel_count: int) -> int:
        """Number of channels masked on a K-channel window."""
        if self.channel_ratio is not None:
            count = ratio_to_count(self.channel_ratio, channel_count)
        else:
            count = self.channel_count_masked
        if count > channel_count:
            raise ValueError(f"Cannot mask {count} channels of a {channel_count}-channel window")
        return count

    def validate(self, channel_count: int):
        if self.masks_channels:
            self.channel_count_for(channel_count)

    def with_overrides(self, **changes) -> "StrategyConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)
