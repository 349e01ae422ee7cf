"""Correlation, outlier, normality and two-group tests with automatic choice.

Method choice follows one rule throughout: parametric only when both
inputs pass a Jarque-Bera normality check (and, for correlation, carry no
|z| > 3 outliers; for group tests, the t-test flavour is picked by a
median-centred Levene test).  Standard deviations use the n-1 denominator.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConstantInput, LengthMismatch, POutOfRange, TooFewSamples
from .kernels import chi2_sf, f_sf, normal_sf, t_sf

ALPHA = 0.05
Z_THRESHOLD = 3.0


class CorrMethod(str, Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"


class TestKind(str, Enum):
    STANDARD_T = "standard_t"
    WELCH_T = "welch_t"
    MANN_WHITNEY_U = "mann_whitney_u"

    __test__ = False


class SplitRule(str, Enum):
    CGPA_THRESHOLD = "cgpa_threshold"
    TERTILE = "tertile"


@dataclass(frozen=True)
class CorrResult:
    coef: float
    p: float
    method: CorrMethod
    n: int


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    sd: float


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p: float
    test: TestKind
    group_summaries: tuple[GroupSummary, GroupSummary]
    df: float | None = None

    __test__ = False


@dataclass(frozen=True)
class NormalityResult:
    is_normal: bool
    p: float
    statistic: float


@dataclass(frozen=True)
class GroupSplit:
    high_ids: tuple[str, ...]
    low_ids: tuple[str, ...]
    rule: SplitRule


# ----------------------------------------------------------------- helpers

def _vector(x, name="x") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return a


def rank_average(x) -> np.ndarray:
    """1-based ranks with ties given the mean of the ranks they span."""
    a = _vector(x)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    first = np.r_[True, sorted_a[1:] != sorted_a[:-1]]
    group = np.cumsum(first) - 1
    bounds = np.r_[np.flatnonzero(first), len(a)]
    avg = 0.5 * (bounds[:-1] + bounds[1:] + 1)
    ranks = np.empty(len(a))
    ranks[order] = avg[group]
    return ranks


def tie_sizes(x) -> np.ndarray:
    _, counts = np.unique(_vector(x), return_counts=True)
    return counts


def summarize(x) -> GroupSummary:
    a = _vector(x)
    sd = float(np.std(a, ddof=1)) if len(a) > 1 else 0.0
    return GroupSummary(len(a), float(np.mean(a)) if len(a) else float("nan"), sd)


# ------------------------------------------------------------- correlation

def _corr_p(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2
    t = r * np.sqrt(df / (1.0 - r * r))
    return min(1.0, 2.0 * t_sf(abs(t), df))


def _check_pair(x, y):
    x, y = _vector(x, "x"), _vector(y, "y")
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise TooFewSamples(f"need at least 3 pairs, got {len(x)}")
    return x, y


def _product_moment(x, y) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ConstantInput("correlation undefined for a constant input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson(x, y) -> CorrResult:
    """Product-moment correlation, two-sided p from the t transform."""
    x, y = _check_pair(x, y)
    r = _product_moment(x, y)
    return CorrResult(r, _corr_p(r, len(x)), CorrMethod.PEARSON, len(x))


def spearman(x, y) -> CorrResult:
    """Rank correlation with average ranks for ties; p as for :func:`pearson`."""
    x, y = _check_pair(x, y)
    r = _product_moment(rank_average(x), rank_average(y))
    return CorrResult(r, _corr_p(r, len(x)), CorrMethod.SPEARMAN, len(x))


def zscore_outliers(x, threshold: float = Z_THRESHOLD) -> list[int]:
    a = _vector(x)
    if len(a) < 2:
        return []
    sd = np.std(a, ddof=1)
    if sd == 0 or not np.isfinite(sd):
        return []
    return np.flatnonzero(np.abs(a - a.mean()) / sd > threshold).tolist()


def jarque_bera(x) -> tuple[float, float]:
    a = _vector(x)
    d = a - a.mean()
    m2 = np.mean(d ** 2)
    if m2 == 0 or np.ptp(a) == 0:
        raise ConstantInput("moments undefined for a constant input")
    skew = np.mean(d ** 3) / m2 ** 1.5
    kurt = np.mean(d ** 4) / m2 ** 2
    stat = len(a) / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0)
    return float(stat), chi2_sf(stat, 2)


def normality(x, alpha: float = ALPHA) -> NormalityResult:
    """Jarque-Bera check; ``is_normal`` when p > alpha.  Needs n >= 8."""
    a = _vector(x)
    if len(a) < 8:
        raise TooFewSamples(f"normality check needs n >= 8, got {len(a)}")
    stat, p = jarque_bera(a)
    return NormalityResult(p > alpha, p, stat)


def _looks_normal(x, alpha) -> bool:
    try:
        return normality(x, alpha).is_normal
    except (TooFewSamples, ConstantInput):
        return False


def choose_corr(x, y, alpha: float = ALPHA, z_threshold: float = Z_THRESHOLD) -> CorrMethod:
    """Pearson when both inputs look normal and are outlier-free, else Spearman."""
    x, y = _check_pair(x, y)
    if (normality(x, alpha).is_normal and normality(y, alpha).is_normal
            and not zscore_outliers(x, z_threshold) and not zscore_outliers(y, z_threshold)):
        return CorrMethod.PEARSON
    return CorrMethod.SPEARMAN


def correlate(x, y, alpha: float = ALPHA, z_threshold: float = Z_THRESHOLD) -> CorrResult:
    """Correlate with the automatic method choice.

    Unlike :func:`choose_corr`, samples too small for the normality check fall
    back to Spearman instead of raising.
    """
    x, y = _check_pair(x, y)
    _product_moment(x, y)  # raises ConstantInput first
    parametric = (_looks_normal(x, alpha) and _looks_normal(y, alpha)
                  and not zscore_outliers(x, z_threshold) and not zscore_outliers(y, z_threshold))
    return pearson(x, y) if parametric else spearman(x, y)


# ------------------------------------------------------------- group tests

@lru_cache(maxsize=256)
def _u_null_counts(n1: int, n2: int) -> np.ndarray:
    """Number of rank assignments giving each U in 0..n1*n2 (no ties)."""
    # table[j] holds the counts for (i, j) while sweeping i
    table = [np.ones(1, dtype=np.int64) for _ in range(n2 + 1)]
    for i in range(1, n1 + 1):
        new = [np.ones(1, dtype=np.int64)]
        for j in range(1, n2 + 1):
            # last element from sample 1 beats all j of sample 2, or it comes from sample 2
            a = np.concatenate([np.zeros(j, dtype=np.int64), table[j]])
            b = new[j - 1]
            out = np.zeros(i * j + 1, dtype=np.int64)
            out[:len(a)] += a
            out[:len(b)] += b
            new.append(out)
        table = new
    return table[n2]


def mann_whitney(a, b, exact_max_n: int = 10) -> TestResult:
    """Two-sided Mann-Whitney U test; ``statistic`` is U for ``a``.

    Exact null distribution when both samples have at most ``exact_max_n``
    values and there are no ties; otherwise the normal approximation with
    tie and continuity corrections.
    """
    a, b = _vector(a, "a"), _vector(b, "b")
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise TooFewSamples("both samples need at least one value")
    both = np.concatenate([a, b])
    ranks = rank_average(both)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    ties = tie_sizes(both)
    summaries = (summarize(a), summarize(b))
    if max(n1, n2) <= exact_max_n and np.all(ties == 1):
        counts = _u_null_counts(n1, n2)
        total = counts.sum()
        k = int(round(u))
        lower = counts[:k + 1].sum() / total
        upper = counts[k:].sum() / total
        p = min(1.0, 2.0 * min(lower, upper))
        return TestResult(u, float(p), TestKind.MANN_WHITNEY_U, summaries)
    n = n1 + n2
    mu = n1 * n2 / 2.0
    tie_term = float(np.sum(ties ** 3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return TestResult(u, 1.0, TestKind.MANN_WHITNEY_U, summaries)
    z = (abs(u - mu) - 0.5) / np.sqrt(var)
    p = min(1.0, 2.0 * normal_sf(z))
    return TestResult(u, p, TestKind.MANN_WHITNEY_U, summaries)


def levene(a, b) -> tuple[float, float]:
    """Median-centred Levene (Brown-Forsythe) statistic and p for two groups."""
    groups = [_vector(a, "a"), _vector(b, "b")]
    devs = [np.abs(g - np.median(g)) for g in groups]
    n_total = sum(len(g) for g in groups)
    k = len(groups)
    grand = np.concatenate(devs).mean()
    between = sum(len(d) * (d.mean() - grand) ** 2 for d in devs)
    within = sum(float(np.sum((d - d.mean()) ** 2)) for d in devs)
    if within == 0:
        return (float("inf"), 0.0) if between > 0 else (0.0, 1.0)
    w = (n_total - k) / (k - 1) * between / within
    return float(w), f_sf(w, k - 1, n_total - k)


def student_t(a, b) -> TestResult:
    a, b = _vector(a, "a"), _vector(b, "b")
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewSamples("t-test needs at least two values per group")
    df = na + nb - 2
    pooled = ((na - 1) * np.var(a, ddof=1) + (nb - 1) * np.var(b, ddof=1)) / df
    se = np.sqrt(pooled * (1.0 / na + 1.0 / nb))
    if se == 0:
        raise ConstantInput("both groups are constant")
    t = (a.mean() - b.mean()) / se
    return TestResult(float(t), min(1.0, 2.0 * t_sf(abs(t), df)), TestKind.STANDARD_T,
                      (summarize(a), summarize(b)), float(df))


def welch_t(a, b) -> TestResult:
    a, b = _vector(a, "a"), _vector(b, "b")
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewSamples("t-test needs at least two values per group")
    va, vb = np.var(a, ddof=1) / na, np.var(b, ddof=1) / nb
    se2 = va + vb
    if se2 == 0:
        raise ConstantInput("both groups are constant")
    df = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    return TestResult(float(t), min(1.0, 2.0 * t_sf(abs(t), df)), TestKind.WELCH_T,
                      (summarize(a), summarize(b)), float(df))


def compare_groups(a, b, alpha: float = ALPHA) -> TestResult:
    """Standard t, Welch t or Mann-Whitney U, whichever the data support.

    Both groups normal (Jarque-Bera, needs n >= 8) with equal variances
    (Levene, p > alpha) selects the standard t-test; normal with unequal
    variances selects Welch; anything else Mann-Whitney.
    """
    a, b = _vector(a, "a"), _vector(b, "b")
    if len(a) >= 3 and len(b) >= 3 and _looks_normal(a, alpha) and _looks_normal(b, alpha):
        _, p_lev = levene(a, b)
        return student_t(a, b) if p_lev > alpha else welch_t(a, b)
    return mann_whitney(a, b)


# ----------------------------------------------------- multiple comparisons

def bh_adjust(pvals: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values, returned in input order."""
    p = np.asarray(pvals, dtype=np.float64)
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise POutOfRange("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="mergesort")
    ranks = np.arange(1, m + 1)
    scaled = p[order] * m / ranks
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    out = np.empty(m)
    out[order] = adj_sorted
    return out


# ------------------------------------------------------------- group splits

def split_by_cgpa(cgpa: Mapping[str, float], high: float = 3.5, low: float = 3.0) -> GroupSplit:
    """High holders have CGPA >= ``high``; low holders CGPA < ``low``."""
    return GroupSplit(tuple(s for s, g in cgpa.items() if g >= high),
                      tuple(s for s, g in cgpa.items() if g < low), SplitRule.CGPA_THRESHOLD)


def split_tertiles(values: Mapping[str, float]) -> GroupSplit:
    """Bottom and top thirds (floor(n/3) each) by value, ties broken by id."""
    if len(values) < 3:
        raise TooFewSamples(f"tertile split needs n >= 3, got {len(values)}")
    ordered = sorted(values, key=lambda sid: (values[sid], sid))
    k = len(ordered) // 3
    return GroupSplit(tuple(ordered[-k:]), tuple(ordered[:k]), SplitRule.TERTILE)
