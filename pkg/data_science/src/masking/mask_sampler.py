"""
Mask sampling and application.

Masking multiplies a window by (1 - I[i in T or j in C]): masked cells become
exactly 0, no learned mask token is involved. All samplers draw from an
explicit numpy Generator, so they are deterministic given its state.
"""
from typing import List, Sequence, Tuple

import numpy as np

from data_science.src.data.recordings import SensorWindow
from data_science.src.masking.strategy_config import MaskSpec, StrategyConfig
from data_science.src.utils import ratio_to_count

SPAN_PLACEMENT_RETRIES = 10


def sample_time_mask(n: int, ratio: float, rng: np.random.Generator) -> Tuple[int, ...]:
    """
    Sample round-half-up(ratio * n) distinct time steps uniformly (at least 1 when ratio > 0).

    Args:
        n (int): Window length N
        ratio (float): Masking ratio in [0, 1]
        rng (np.random.Generator): Random stream

    Returns:
        Tuple[int, ...]: Sorted time indices T
    """
    count = ratio_to_count(ratio, n)
    return tuple(sorted(rng.choice(n, size=count, replace=False).tolist()))


def sample_span_mask(n: int, ratio: float, p: float, max_len: int,
                     rng: np.random.Generator) -> Tuple[int, ...]:
    """
    Sample contiguous spans until exactly round-half-up(ratio * n) steps are masked.

    Span lengths follow Geometric(p) clipped to [1, max_len] and truncated to the
    remaining budget. A span is placed at a uniform start if it does not touch
    already-masked steps; after SPAN_PLACEMENT_RETRIES failed placements the span
    is grown instead from a uniformly chosen free step over adjacent free steps.

    Args:
        n (int): Window length N
        ratio (float): Masking ratio in [0, 1]
        p (float): Geometric parameter in (0, 1)
        max_len (int): Longest span
        rng (np.random.Generator): Random stream

    Returns:
        Tuple[int, ...]: Sorted time indices T, a union of contiguous runs
    """
    target = ratio_to_count(ratio, n)
    masked = np.zeros(n, dtype=bool)
    remaining = target
    while remaining > 0:
        span = int(min(rng.geometric(p), max_len, remaining))
        for _ in range(SPAN_PLACEMENT_RETRIES):
            start = int(rng.integers(0, n - span + 1))
            if not masked[start:start + span].any():
                masked[start:start + span] = True
                remaining -= span
                break
        else:
            free = np.flatnonzero(~masked)
            position = int(free[rng.integers(0, free.size)])
            placed = 0
            while placed < span and position < n and not masked[position]:
                masked[position] = True
                position += 1
                placed += 1
            remaining -= placed
    return tuple(np.flatnonzero(masked).tolist())


def sample_channel_mask(k: int, count: int, rng: np.random.Generator) -> Tuple[int, ...]:
    """
    Sample `count` distinct channels uniformly.

    Raises:
        ValueError: count > k or count < 0
    """
    if not 0 <= count <= k:
        raise ValueError(f"Cannot mask {count} of {k} channels")
    return tuple(sorted(rng.choice(k, size=count, replace=False).tolist()))


def sample_mask_spec(cfg: StrategyConfig, n: int, k: int, rng: np.random.Generator) -> MaskSpec:
    """Sample one MaskSpec for an N x K window; the strategy kind decides which of T and C are drawn."""
    time_indices: Tuple[int, ...] = ()
    channel_indices: Tuple[int, ...] = ()
    if cfg.masks_time:
        time_indices = sample_time_mask(n, cfg.time_ratio, rng)
    elif cfg.masks_span:
        time_indices = sample_span_mask(n, cfg.span_ratio, cfg.span_geometric_p, cfg.span_max_len, rng)
    if cfg.masks_channels:
        channel_indices = sample_channel_mask(k, cfg.channel_count_for(k), rng)
    return MaskSpec(time_indices, channel_indices)


def apply_mask_values(values: np.ndarray, spec: MaskSpec) -> np.ndarray:
    """Masked copy of an N x K array."""
    n, k = values.shape
    spec.validate(n, k)
    return values * ~spec.cells(n, k)


def apply_mask(w: SensorWindow, spec: MaskSpec) -> SensorWindow:
    """
    Zero every cell (i, j) with i in T or j in C.

    Args:
        w (SensorWindow): Window (left unmodified)
        spec (MaskSpec): Mask within the window's dimensions

    Returns:
        SensorWindow: Masked copy with the same label and subject
    """
    return SensorWindow(apply_mask_values(w.values, spec), w.label, w.subject_id)


def mask_batch_values(values: np.ndarray, cfg: StrategyConfig,
                      rng: np.random.Generator) -> Tuple[np.ndarray, List[MaskSpec]]:
    """
    Mask a B x N x K batch.

    With same_position_per_batch one spec is drawn and shared by the whole batch,
    otherwise every window gets an independent draw.

    Returns:
        Tuple[np.ndarray, List[MaskSpec]]: Masked copy and the B specs used
    """
    if values.ndim != 3 or values.shape[0] == 0:
        raise ValueError(f"Expected a nonempty B x N x K batch, got shape {values.shape}")
    b, n, k = values.shape
    if cfg.same_position_per_batch:
        specs = [sample_mask_spec(cfg, n, k, rng)] * b
    else:
        specs = [sample_mask_spec(cfg, n, k, rng) for _ in range(b)]
    return values * ~mask_cells(specs, n, k), specs


def batch_mask(batch: Sequence[SensorWindow], cfg: StrategyConfig,
               rng: np.random.Generator) -> Tuple[List[SensorWindow], List[MaskSpec]]:
    """
    Mask a list of equally-shaped windows (see mask_batch_values).

    Returns:
        Tuple[List[SensorWindow], List[MaskSpec]]: Masked windows and their specs
    """
    if not batch:
        raise ValueError("Cannot mask an empty batch")
    shapes = {w.values.shape for w in batch}
    if len(shapes) != 1:
        raise ValueError(f"Batch windows differ in shape: {sorted(shapes)}")
    masked, specs = mask_batch_values(np.stack([w.values for w in batch]), cfg, rng)
    return [SensorWindow(v, w.label, w.subject_id) for v, w in zip(masked, batch)], specs


def mask_cells(specs: Sequence[MaskSpec], n: int, k: int) -> np.ndarray:
    """Boolean B x N x K indicator of masked cells."""
    return np.stack([spec.cells(n, k) for spec in specs])


def time_cells(specs: Sequence[MaskSpec], n: int, k: int) -> np.ndarray:
    """Boolean B x N x K selector of cells on masked time steps."""
    return np.stack([spec.time_cells(n, k) for spec in specs])


def channel_cells(specs: Sequence[MaskSpec], n: int, k: int) -> np.ndarray:
    """Boolean B x N x K selector of cells on masked channels."""
    return np.stack([spec.channel_cells(n, k) for spec in specs])
