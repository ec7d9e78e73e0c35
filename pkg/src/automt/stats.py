"""Evaluation statistics: weighted multi-rater kappa and Welch's t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DegenerateMarginals


class KappaWeights(Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


def _disagreement_matrix(n_categories: int, weights: KappaWeights) -> np.ndarray:
    idx = np.arange(n_categories, dtype=np.float64)
    if n_categories == 1:
        return np.zeros((1, 1))
    normalized = np.abs(idx[:, None] - idx[None, :]) / (n_categories - 1)
    if weights is KappaWeights.QUADRATIC:
        return normalized**2
    return normalized


def weighted_fleiss_kappa(
    table: Sequence[Sequence[int]],
    weights: KappaWeights = KappaWeights.LINEAR,
    n_categories: int | None = None,
) -> float:
    """Weighted multi-rater kappa over an items x raters table of categories 1..C.

    kappa = 1 - observed/expected mean weighted disagreement, with agreement
    weight 1 - |i-j|/(C-1) (linear) or 1 - ((i-j)/(C-1))^2 (quadratic);
    expected disagreement uses the pooled marginal category distribution.
    """
    data = np.asarray(table, dtype=np.int64)
    if data.ndim != 2:
        raise ValueError("rating table must be rectangular (items x raters)")
    n_items, n_raters = data.shape
    if n_items < 1 or n_raters < 2:
        raise ValueError("need at least 1 item and 2 raters")
    c = int(n_categories) if n_categories else int(data.max())
    if data.min() < 1 or data.max() > c:
        raise ValueError(f"categories must lie in 1..{c}")
    d = _disagreement_matrix(c, weights)

    counts = np.zeros((n_items, c), dtype=np.float64)
    for category in range(1, c + 1):
        counts[:, category - 1] = (data == category).sum(axis=1)
    # Ordered distinct-rater pairs per item; same-category pairs carry weight 0,
    # so the n_i*n_j product form needs no self-pair correction.
    pair_count = n_raters * (n_raters - 1)
    observed = float(np.einsum("ic,cd,id->", counts, d, counts) / (pair_count * n_items))

    marginals = counts.sum(axis=0) / (n_items * n_raters)
    expected = float(marginals @ d @ marginals)
    if expected == 0.0:
        if observed == 0.0:
            return 1.0
        raise DegenerateMarginals("expected disagreement 0 with observed > 0")
    return 1.0 - observed / expected


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_sided: float
    degenerate: bool = False


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iterations = 300
    eps = 1e-15
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        coeff = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coeff = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via the symmetric continued-fraction evaluation."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom.

    Both samples having zero variance is degenerate: p is 1 for equal means
    and 0 otherwise, flagged on the result.
    """
    xs, ys = [float(v) for v in a], [float(v) for v in b]
    na, nb = len(xs), len(ys)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least 2 observations")
    ma, mb = math.fsum(xs) / na, math.fsum(ys) / nb
    va = math.fsum((x - ma) ** 2 for x in xs) / (na - 1)
    vb = math.fsum((y - mb) ** 2 for y in ys) / (nb - 1)
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return TTestResult(0.0, float("nan"), 1.0, degenerate=True)
        t = math.copysign(float("inf"), ma - mb)
        return TTestResult(t, float("nan"), 0.0, degenerate=True)
    sa, sb = va / na, vb / nb
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    if t == 0.0:
        return TTestResult(0.0, df, 1.0)
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return TTestResult(t, df, min(max(p, 0.0), 1.0))
