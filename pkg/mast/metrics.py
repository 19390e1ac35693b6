"""Accuracy and calibration metrics with HF-only normalization"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import ContractViolationError, ReportingError

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricsRecord:
    """Per-seed metrics of one method on one problem"""

    rmse: float
    mean_pdf: float
    n_test: int
    seed: int
    method: str
    problem: str

    def __post_init__(self):
        if self.rmse < 0 or self.mean_pdf < 0:
            raise ContractViolationError("rmse and mean_pdf must be non-negative")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    median: float
    iqr: float
    count: int


def _paired(first, second, names: str):
    a = np.asarray(first, dtype=float).reshape(-1)
    b = np.asarray(second, dtype=float).reshape(-1)
    if a.size != b.size or a.size == 0:
        raise ContractViolationError(f"{names} must have equal non-zero lengths")
    return a, b


def rmse(pred_means, truth) -> float:
    means, target = _paired(pred_means, truth, "pred_means and truth")
    return float(np.sqrt(np.mean((means - target) ** 2)))


def mean_pdf(pred_means, pred_vars, truth) -> float:
    """Average Gaussian predictive density at the true values"""
    means, target = _paired(pred_means, truth, "pred_means and truth")
    variances, _ = _paired(pred_vars, truth, "pred_vars and truth")
    scale = np.sqrt(np.maximum(variances, VARIANCE_FLOOR))
    return float(np.mean(norm.pdf(target, loc=means, scale=scale)))


def normalize(value: float, baseline: float) -> float:
    """Ratio to the HF-only baseline (RMSE < 1 and mean PDF > 1 are improvements)"""
    if not baseline > 0:
        raise ReportingError(f"baseline must be positive, got {baseline}")
    return float(value) / float(baseline)


def summarize_metric(values: Sequence[float]) -> MetricSummary:
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return MetricSummary(float("nan"), float("nan"), float("nan"), 0)
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    return MetricSummary(float(np.mean(data)), float(median), float(q3 - q1), int(data.size))
