"""Rank and linear correlation metrics for quality-score evaluation.

SRCC is Pearson correlation on average-rank transforms, which reduces to the
classic 1 - 6*sum(d^2)/(N*(N^2-1)) closed form whenever both vectors are
tie-free; PLCC is two-pass mean-centered Pearson in float64. Constant inputs
raise UndefinedCorrelationError instead of propagating NaN into reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedCorrelationError, ValidationError

__all__ = [
    "CorrelationResult",
    "rank_transform",
    "spearman_rcc",
    "pearson_lcc",
    "compute_correlations",
]


@dataclass(frozen=True)
class CorrelationResult:
    """SRCC and PLCC for one (truth, prediction) pairing of n samples."""

    srcc: float
    plcc: float
    n: int


def _as_scores(values: Sequence[float], name: str, min_len: int = 1) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D sequence, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValidationError(f"{name} needs at least {min_len} values, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _check_pair(truth: Sequence[float], pred: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    t = _as_scores(truth, "truth", min_len=2)
    p = _as_scores(pred, "pred", min_len=2)
    if t.size != p.size:
        raise ValidationError(f"length mismatch: truth has {t.size}, pred has {p.size}")
    return t, p


def rank_transform(values: Sequence[float]) -> np.ndarray:
    """Return 1-based ranks; tied values share the mean of their rank block.

    The output always sums to N*(N+1)/2.
    """
    arr = _as_scores(values, "values", min_len=1)
    n = arr.size
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # positions i..j (0-based) hold equal values -> ranks i+1..j+1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    # Two-pass: means first, then centered moments, all in float64.
    mx = x.mean()
    my = y.mean()
    dx = x - mx
    dy = y - my
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined: at least one input vector is constant"
        )
    r = float(np.dot(dx, dy) / np.sqrt(sxx * syy))
    return min(1.0, max(-1.0, r))


def pearson_lcc(truth: Sequence[float], pred: Sequence[float]) -> float:
    """Pearson linear correlation coefficient in [-1, 1].

    Raises UndefinedCorrelationError when either vector is constant.
    """
    t, p = _check_pair(truth, pred)
    return _pearson(t, p)


def spearman_rcc(truth: Sequence[float], pred: Sequence[float]) -> float:
    """Spearman rank correlation coefficient in [-1, 1].

    Tie-free inputs take the closed form on rank differences; any ties fall
    back to Pearson over average ranks (the standard generalization, since
    the closed form is only exact without ties). Raises
    UndefinedCorrelationError when either vector is constant.
    """
    t, p = _check_pair(truth, pred)
    if (t == t[0]).all() or (p == p[0]).all():
        raise UndefinedCorrelationError(
            "correlation undefined: at least one input vector is constant"
        )
    rt = rank_transform(t)
    rp = rank_transform(p)
    n = t.size
    tie_free = np.unique(t).size == n and np.unique(p).size == n
    if tie_free:
        d = rt - rp
        return float(1.0 - 6.0 * np.dot(d, d) / (n * (n * n - 1.0)))
    return _pearson(rt, rp)


def compute_correlations(truth: Sequence[float], pred: Sequence[float]) -> CorrelationResult:
    """Bundle SRCC and PLCC for one evaluation pass."""
    t, p = _check_pair(truth, pred)
    return CorrelationResult(srcc=spearman_rcc(t, p), plcc=pearson_lcc(t, p), n=int(t.size))
