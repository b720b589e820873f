"""Two-sample significance tests: Welch's t-test and Mann-Whitney U."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import ndtr, stdtr
from scipy.stats import rankdata

from .errors import DegenerateTest

EXACT_MAX = 8


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    degenerate: bool = False

    # keep pytest from collecting this as a test class
    __test__ = False


def _as_array(x: Sequence[float]) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    return arr


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided unequal-variance t-test with Welch-Satterthwaite df.

    Two constant samples with different means give ``p = 0`` with the
    ``degenerate`` flag; equal means raise :class:`DegenerateTest`.
    """
    x, y = _as_array(a), _as_array(b)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least 2 values")
    mx, my = x.mean(), y.mean()
    vx = x.var(ddof=1) / x.size
    vy = y.var(ddof=1) / y.size
    se2 = vx + vy
    if se2 == 0.0:
        if mx == my:
            raise DegenerateTest("both samples constant with equal means")
        return TestResult(math.copysign(math.inf, mx - my), 0.0, "welch", degenerate=True)
    t = (mx - my) / math.sqrt(se2)
    df = se2 * se2 / (vx * vx / (x.size - 1) + vy * vy / (y.size - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TestResult(float(t), min(1.0, p), "welch")


@lru_cache(maxsize=256)
def _u_counts(n: int, m: int) -> np.ndarray:
    """Number of arrangements giving each U = 0..n*m, for sample sizes n and m.

    Uses c(i, j, u) = c(i-1, j, u-j) + c(i, j-1, u), with U counting pairs
    in which the first-sample value is the larger.
    """
    if n > m:
        # U for (n, m) is nm - U for (m, n); the distribution is symmetric
        return _u_counts(m, n)
    # col[i] holds c(i, j, .) for the current j
    col = [np.ones(1) for _ in range(n + 1)]
    for j in range(1, m + 1):
        new = [np.ones(1)]
        for i in range(1, n + 1):
            size = i * j + 1
            arr = np.zeros(size)
            prev_j = col[i]  # c(i, j-1, .)
            arr[: prev_j.size] += prev_j
            shifted = new[i - 1]  # c(i-1, j, .) shifted by j
            arr[j : j + shifted.size] += shifted
            new.append(arr)
        col = new
    out = col[n]
    out.setflags(write=False)
    return out


def mann_whitney_exact_p(u: float, n: int, m: int) -> float:
    """Exact two-sided p for a tie-free U statistic."""
    counts = _u_counts(n, m)
    total = counts.sum()
    k = int(math.floor(u + 1e-9))
    lower = counts[: k + 1].sum() / total
    k_up = int(math.ceil(u - 1e-9))
    upper = counts[k_up:].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Mann-Whitney U test; the statistic is U of sample ``a``.

    Exact null distribution when ``min(len(a), len(b)) <= 8`` and there are no
    ties; otherwise the normal approximation with tie and continuity
    corrections.
    """
    x, y = _as_array(a), _as_array(b)
    n, m = x.size, y.size
    if n < 1 or m < 1:
        raise ValueError("each sample needs at least 1 value")
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    if min(n, m) <= EXACT_MAX and not has_ties:
        return TestResult(u, mann_whitney_exact_p(u, n, m), "mwu-exact")
    N = n + m
    mu = n * m / 2.0
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts)) / (N * (N - 1)) if N > 1 else 0.0
    var = n * m / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        return TestResult(u, 1.0, "mwu-normal", degenerate=True)
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    p = 2.0 * float(ndtr(-z))
    return TestResult(u, min(1.0, p), "mwu-normal")
