"""ROC-AUC by rank sum and the per-seed metric report."""

import logging
from typing import List, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field

from gclbench.errors import ProbeError

logger = logging.getLogger(__name__)


def tied_rank(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their ranks."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_values = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    start = 0
    while start < values.size:
        end = start
        while end + 1 < values.size and sorted_values[end + 1] == sorted_values[start]:
            end += 1
        ranks[order[start:end + 1]] = (start + end + 2) / 2.0
        start = end + 1
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive outscores a random negative (ties 0.5)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ProbeError(f"scores {scores.shape} and labels {labels.shape} are not aligned")
    positives = labels == 1
    num_pos = int(positives.sum())
    num_neg = int(labels.size - num_pos)
    if num_pos == 0 or num_neg == 0:
        raise ProbeError("ROC-AUC needs at least one positive and one negative sample")
    rank_sum = tied_rank(scores)[positives].sum()
    return float((rank_sum - num_pos * (num_pos + 1) / 2.0) / (num_pos * num_neg))


def accuracy(predicted: Sequence[int], labels: Sequence[int]) -> float:
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    if predicted.size == 0:
        raise ProbeError("Accuracy of an empty prediction set is undefined")
    return float(np.mean(predicted == labels))


class MetricReport(BaseModel):
    """Per-seed values with their mean and population standard deviation."""

    metric: Literal["accuracy", "roc-auc"] = Field(description="Metric name")
    values: List[float] = Field(description="One value per seed")
    mean: float = Field(description="Mean over seeds")
    std: float = Field(description="Population standard deviation over seeds")

    @classmethod
    def from_values(cls, metric: str, values: Sequence[float]) -> "MetricReport":
        values = [float(v) for v in values]
        if not values:
            raise ProbeError("A metric report needs at least one value")
        return cls(metric=metric, values=values, mean=float(np.mean(values)), std=float(np.std(values)))
