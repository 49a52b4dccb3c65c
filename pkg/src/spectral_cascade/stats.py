"""Correlation coefficients with two-sided p-values."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as _st

from .errors import DegenerateInput

KINDS = ("pearson", "spearman", "kendall")


def _pearson(x, y):
    xm = x - x.mean()
    ym = y - y.mean()
    return float(np.dot(xm, ym) / math.sqrt(np.dot(xm, xm) * np.dot(ym, ym)))


def _t_pvalue(r, n):
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * _st.t.sf(abs(t), n - 2))


def _kendall(x, y):
    res = _st.kendalltau(x, y, variant="b", method="asymptotic")
    return float(res.statistic), float(res.pvalue)


def _coef(x, y, kind):
    if kind == "pearson":
        return _pearson(x, y)
    if kind == "spearman":
        return _pearson(_st.rankdata(x), _st.rankdata(y))
    return _kendall(x, y)[0]


def correlation(x, y, kind: str = "pearson", *, permutations: int = 0, seed: int = 0):
    """Return ``(coefficient, two_sided_p)``.

    Pearson and Spearman p-values use the t approximation with n - 2 degrees
    of freedom; Kendall's tau-b uses the tie-corrected normal approximation.
    With ``permutations > 0`` the p-value is a permutation estimate instead.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    n = len(x)
    if n < 3:
        raise DegenerateInput(f"need at least 3 observations, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant input")

    if kind == "kendall":
        coef, p = _kendall(x, y)
    else:
        coef = _coef(x, y, kind)
        p = _t_pvalue(coef, n)
    coef = max(-1.0, min(1.0, coef))

    if permutations > 0:
        rng = np.random.default_rng(seed)
        hits = sum(abs(_coef(x, rng.permutation(y), kind)) >= abs(coef) - 1e-12
                   for _ in range(permutations))
        p = (hits + 1) / (permutations + 1)
    return coef, p
