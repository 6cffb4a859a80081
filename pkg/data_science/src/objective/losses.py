"""
Masked reconstruction losses and the downstream cross-entropy.

MSE terms are means over the selected scalar cells. The time term selects every
channel of each masked step, the channel term every step of each masked channel;
cells masked on both axes count in both terms.
"""
from dataclasses import dataclass, asdict
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from data_science.src.errors import UndefinedLossError
from data_science.src.masking.strategy_config import MaskSpec
from data_science.src.masking.mask_sampler import time_cells, channel_cells

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class LossBreakdown:
    """
    Components of one reconstruction loss evaluation.

    A component is None when its axis was not masked; combined then equals the
    other component.
    """
    loss_time: Optional[float]
    loss_channel: Optional[float]
    combined: float
    alpha: float

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def mean(breakdowns: Sequence["LossBreakdown"]) -> "LossBreakdown":
        """Component-wise mean (components absent from every entry stay None)."""
        def avg(values):
            values = [v for v in values if v is not None]
            return float(np.mean(values)) if values else None
        return LossBreakdown(loss_time=avg(b.loss_time for b in breakdowns),
                             loss_channel=avg(b.loss_channel for b in breakdowns),
                             combined=float(np.mean([b.combined for b in breakdowns])),
                             alpha=breakdowns[0].alpha)


def masked_mse(raw: np.ndarray, rec: np.ndarray, cells: np.ndarray) -> float:
    """
    Mean of (raw - rec)^2 over the selected cells.

    Args:
        raw (np.ndarray): Original values
        rec (np.ndarray): Reconstruction, same shape
        cells (np.ndarray): Boolean selector, same shape

    Raises:
        UndefinedLossError: No cell is selected
    """
    return _masked_mse_and_grad(raw, rec, cells)[0]


def _masked_mse_and_grad(raw: np.ndarray, rec: np.ndarray, cells: np.ndarray) -> Tuple[float, np.ndarray]:
    if raw.shape != rec.shape or cells.shape != raw.shape:
        raise ValueError(f"Shape mismatch: raw {raw.shape}, rec {rec.shape}, cells {cells.shape}")
    count = int(cells.sum())
    if count == 0:
        raise UndefinedLossError("masked MSE over an empty cell set")
    diff = np.where(cells, rec - raw, 0.0)
    return float(np.sum(diff * diff) / count), 2.0 * diff / count


def _as_batch(raw: np.ndarray, rec: np.ndarray,
              spec: Union[MaskSpec, Sequence[MaskSpec]]) -> Tuple[np.ndarray, np.ndarray, Sequence[MaskSpec], bool]:
    if raw.shape != rec.shape:
        raise ValueError(f"Shape mismatch: raw {raw.shape}, rec {rec.shape}")
    if raw.ndim == 2:
        if not isinstance(spec, MaskSpec):
            raise ValueError("A single window needs a single MaskSpec")
        return raw[None], rec[None], [spec], True
    specs = [spec] * raw.shape[0] if isinstance(spec, MaskSpec) else list(spec)
    if len(specs) != raw.shape[0]:
        raise ValueError(f"Got {len(specs)} mask specs for a batch of {raw.shape[0]}")
    return raw, rec, specs, False


def combined_loss_and_grad(raw: np.ndarray, rec: np.ndarray, spec: Union[MaskSpec, Sequence[MaskSpec]],
                           alpha: float = DEFAULT_ALPHA) -> Tuple[LossBreakdown, np.ndarray]:
    """
    alpha * loss_time + (1 - alpha) * loss_channel and its gradient w.r.t. rec.

    Args:
        raw (np.ndarray): N x K window or B x N x K batch of original values
        rec (np.ndarray): Reconstruction, same shape
        spec (MaskSpec | Sequence[MaskSpec]): One spec, or one per batch window
        alpha (float): Weight of the time term in [0, 1]

    Returns:
        Tuple[LossBreakdown, np.ndarray]: Loss components and d(combined)/d(rec)

    Raises:
        UndefinedLossError: Neither axis is masked
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    raw_b, rec_b, specs, single = _as_batch(raw, rec, spec)
    _, n, k = raw_b.shape
    for s in specs:
        s.validate(n, k)
    t_cells = time_cells(specs, n, k)
    c_cells = channel_cells(specs, n, k)
    has_time, has_channel = bool(t_cells.any()), bool(c_cells.any())
    if not has_time and not has_channel:
        raise UndefinedLossError("combined loss needs a nonempty time or channel mask")

    loss_time = loss_channel = None
    grad = np.zeros_like(rec_b)
    if has_time and has_channel:
        loss_time, grad_time = _masked_mse_and_grad(raw_b, rec_b, t_cells)
        loss_channel, grad_channel = _masked_mse_and_grad(raw_b, rec_b, c_cells)
        combined = alpha * loss_time + (1.0 - alpha) * loss_channel
        grad = alpha * grad_time + (1.0 - alpha) * grad_channel
    elif has_time:
        loss_time, grad = _masked_mse_and_grad(raw_b, rec_b, t_cells)
        combined = loss_time
    else:
        loss_channel, grad = _masked_mse_and_grad(raw_b, rec_b, c_cells)
        combined = loss_channel
    breakdown = LossBreakdown(loss_time=loss_time, loss_channel=loss_channel, combined=float(combined), alpha=alpha)
    return breakdown, (grad[0] if single else grad)


def combined_loss(raw: np.ndarray, rec: np.ndarray, spec: Union[MaskSpec, Sequence[MaskSpec]],
                  alpha: float = DEFAULT_ALPHA) -> LossBreakdown:
    """
    Weighted time/channel reconstruction loss.

    With an empty T only the channel term is used (and vice versa), whatever
    alpha is. See combined_loss_and_grad for arguments.
    """
    return combined_loss_and_grad(raw, rec, spec, alpha)[0]


def cross_entropy_and_grad(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean negative log-softmax of the true class, and its gradient w.r.t. logits.

    Args:
        logits (np.ndarray): B x A unnormalized scores
        labels (np.ndarray): B integer labels in [0, A)

    Returns:
        Tuple[float, np.ndarray]: Loss and B x A gradient
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"Expected B x A logits and B labels, got {logits.shape} and {labels.shape}")
    b, a = logits.shape
    if b == 0:
        raise ValueError("Cannot compute cross entropy of an empty batch")
    if labels.min() < 0 or labels.max() >= a:
        raise ValueError(f"Labels must be in [0, {a}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(b)
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / b


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross entropy of B x A logits against B labels (max-subtracted for stability)."""
    return cross_entropy_and_grad(logits, labels)[0]
