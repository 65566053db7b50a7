# pcsracing/stats_logic.py
#
# Win-rate statistics for the tournament reports.

import logging
import math
from typing import Sequence

import numpy as np
from scipy import stats

from .schemas import TTestResult

logger = logging.getLogger(__name__)


def paired_ttest(x: Sequence[float], y: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on y - x with n - 1 degrees of freedom.

    delta_mu is mean(y) - mean(x). When the differences have zero variance the
    statistic is undefined and the result carries the zero-variance sentinel.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"Paired samples must be equal-length vectors, got {x.shape} and {y.shape}")
    n = len(x)
    if n < 2:
        raise ValueError(f"Paired t-test needs at least 2 pairs, got {n}")
    diffs = y - x
    delta_mu = float(np.mean(y) - np.mean(x))
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        logger.info(f"Paired t-test over {n} pairs has zero-variance differences (delta {delta_mu})")
        return TTestResult(t=None, p=None, delta_mu=delta_mu, n=n, zero_variance=True)
    t = float(np.mean(diffs) / (sd / math.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return TTestResult(t=t, p=p, delta_mu=delta_mu, n=n)


def mean_std(values: Sequence[float]) -> tuple:
    """Mean and population standard deviation, as the win-rate table reports them."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    return float(arr.mean()), float(arr.std())
