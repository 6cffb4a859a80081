"""
Mean F1 and confidence intervals.

"Mean F1" is the macro average of per-class F1 over the dataset's A classes.
A class absent from both predictions and labels is skipped in the mean (and
reported as 0 in the per-class list); a class that is predicted but never
true, or true but never predicted, counts with F1 = 0.
"""
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.metrics import confusion_matrix

from data_science.src.data.recordings import WindowSet
from data_science.src.model.network import ModelParams, predict_labels
from data_science.src.utils import json_snapshot

CONFIDENCE_LEVEL = 0.95


def macro_f1(preds: Sequence[int], labels: Sequence[int], num_classes: int) -> Tuple[float, List[float]]:
    """
    Macro-averaged F1.

    Args:
        preds (Sequence[int]): Predicted classes in [0, A)
        labels (Sequence[int]): True classes in [0, A)
        num_classes (int): A

    Returns:
        Tuple[float, List[float]]: (mean F1, per-class F1 of length A)
    """
    preds, labels = np.asarray(preds, dtype=np.int64), np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"preds and labels differ in length: {preds.shape} vs {labels.shape}")
    for name, values in (("preds", preds), ("labels", labels)):
        if values.size and (values.min() < 0 or values.max() >= num_classes):
            raise ValueError(f"{name} must be in [0, {num_classes})")
    matrix = confusion_matrix(labels, preds, labels=np.arange(num_classes))
    tp = np.diag(matrix).astype(np.float64)
    predicted, actual = matrix.sum(axis=0), matrix.sum(axis=1)
    denominator = predicted + actual
    # 2*prec*rec/(prec+rec) == 2*tp/(predicted+actual); 0 when prec+rec == 0
    per_class = np.divide(2.0 * tp, denominator, out=np.zeros(num_classes), where=denominator > 0)
    present = denominator > 0
    mean = float(per_class[present].mean()) if present.any() else 0.0
    return mean, per_class.tolist()


def confidence_interval(scores: Sequence[float], level: float = CONFIDENCE_LEVEL) -> Tuple[float, float]:
    """
    Student-t interval of the mean.

    Args:
        scores (Sequence[float]): At least two run scores
        level (float): Two-sided confidence level

    Returns:
        Tuple[float, float]: (mean, half-width t_{(1+level)/2, n-1} * s / sqrt(n))
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 2:
        raise ValueError(f"A confidence interval needs at least 2 scores, got {scores.size}")
    n = scores.size
    halfwidth = stats.t.ppf(0.5 + level / 2.0, n - 1) * scores.std(ddof=1) / np.sqrt(n)
    return float(scores.mean()), float(halfwidth)


def predict(params: ModelParams, windows: WindowSet, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode arg-max class of every window."""
    if windows.channel_count != params.channel_count:
        raise ValueError(f"Model expects {params.channel_count} channels, windows have {windows.channel_count}")
    return predict_labels(params, windows.values(), batch_size)


def evaluate(params: ModelParams, windows: WindowSet, batch_size: int = 1024) -> Tuple[float, List[float]]:
    """Mean and per-class F1 of a classifier on a window set."""
    return macro_f1(predict(params, windows, batch_size), windows.labels(), windows.num_classes)


@dataclass
class MetricsReport:
    """
    Scores of one table row across repeated runs.

    mean_f1 is the arithmetic mean of per_run_f1; ci95_halfwidth is None with
    fewer than two runs.
    """
    protocol: str
    label: str
    per_run_f1: List[float]
    mean_f1: float
    ci95_halfwidth: Optional[float]
    per_class_f1: List[float]
    seeds: List[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_runs(cls, protocol: str, label: str, run_scores: Sequence[Tuple[float, Sequence[float]]],
                  seeds: Sequence[int], config: dict) -> "MetricsReport":
        """
        Args:
            run_scores: (mean F1, per-class F1) of every run, in seed order
        """
        if not run_scores:
            raise ValueError("A report needs at least one run")
        per_run = [float(score) for score, _ in run_scores]
        halfwidth = confidence_interval(per_run)[1] if len(per_run) >= 2 else None
        per_class = np.mean([per_class for _, per_class in run_scores], axis=0).tolist()
        return cls(protocol=protocol, label=label, per_run_f1=per_run, mean_f1=float(np.mean(per_run)),
                   ci95_halfwidth=halfwidth, per_class_f1=per_class, seeds=[int(s) for s in seeds],
                   config=json_snapshot(config))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)
