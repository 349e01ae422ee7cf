"""Association and group-comparison batteries over a feature matrix.

Every feature is tested against CGPA; p-values are BH-adjusted within a
family.  The default families mirror the layout of the published tables:

``table1``  phone-level usage and session counts over the whole day
``table2``  phone-level session counts per day part
``table3``  category usage over the whole day
``table4``  category usage per day part
``phone_periods``  phone-level usage per day part
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ConstantInput, StatsError
from ..featurize import PHONE, SESSION_METRICS, FeatureMatrix, parse_feature_name
from .core import (
    ALPHA,
    Z_THRESHOLD,
    GroupSplit,
    bh_adjust,
    compare_groups,
    correlate,
    split_by_cgpa,
    split_tertiles,
    summarize,
)

OK = "ok"
NA = "N/A"
CONSTANT = "ConstantInput"


def default_family(name: str) -> str:
    scope, metric, period = parse_feature_name(name)
    whole = period == "whole"
    if scope == PHONE:
        if whole:
            return "table1"
        return "table2" if metric in SESSION_METRICS else "phone_periods"
    return "table3" if whole else "table4"


@dataclass(frozen=True)
class AssocCell:
    feature: str
    family: str
    n: int
    method: str | None
    coef: float | None
    p: float | None
    p_adj: float | None
    status: str


def _adjust(cells: list, family_of_cell, make) -> list:
    out = list(cells)
    families: dict[str, list[int]] = {}
    for i, c in enumerate(out):
        if c.status == OK:
            families.setdefault(family_of_cell(c), []).append(i)
    for idx in families.values():
        adj = bh_adjust([out[i].p for i in idx])
        for i, q in zip(idx, adj):
            out[i] = make(out[i], float(q))
    return out


def _user_rows(matrix: FeatureMatrix, j: int, restrict: bool) -> np.ndarray:
    scope, _, _ = parse_feature_name(matrix.names[j])
    if restrict and scope != PHONE:
        return matrix.mask[:, j]
    return np.ones(len(matrix.student_ids), dtype=bool)


@dataclass(frozen=True)
class AssocReport:
    cells: tuple[AssocCell, ...]
    alpha: float

    def cell(self, feature: str) -> AssocCell:
        for c in self.cells:
            if c.feature == feature:
                return c
        raise KeyError(feature)

    def family(self, name: str) -> list[AssocCell]:
        return [c for c in self.cells if c.family == name]

    @property
    def families(self) -> list[str]:
        return list(dict.fromkeys(c.family for c in self.cells))

    def significant(self, adjusted: bool = True) -> list[AssocCell]:
        key = "p_adj" if adjusted else "p"
        return [c for c in self.cells if c.status == OK and getattr(c, key) < self.alpha]

    def to_csv(self, path, family: str | None = None) -> None:
        cells = self.cells if family is None else self.family(family)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", "family", "n", "method", "coef", "p", "p_adj", "status"])
            for c in cells:
                writer.writerow([c.feature, c.family, c.n, c.method or "", _num(c.coef), _num(c.p),
                                 _num(c.p_adj), c.status])

    def wide_rows(self, family: str) -> tuple[list[str], list[list]]:
        """Pivot one family to one row per (scope, period), metrics across.

        This is the shape of the published correlation tables: a sample size
        column then coefficient and p per usage metric.
        """
        cells = self.family(family)
        metrics = list(dict.fromkeys(parse_feature_name(c.feature)[1] for c in cells))
        rows: dict[tuple[str, str], dict] = {}
        for c in cells:
            scope, metric, period = parse_feature_name(c.feature)
            rows.setdefault((scope, period), {})[metric] = c
        header = ["scope", "period", "n"]
        for m in metrics:
            header += [f"{m}.method", f"{m}.coef", f"{m}.p", f"{m}.p_adj"]
        out = []
        for (scope, period), by_metric in rows.items():
            n = max(c.n for c in by_metric.values())
            row = [scope, period, n]
            for m in metrics:
                c = by_metric.get(m)
                if c is None or c.status != OK:
                    row += [c.status if c else "", NA, NA, NA]
                else:
                    row += [c.method, _num(c.coef), _num(c.p), _num(c.p_adj)]
            out.append(row)
        return header, out

    def write_wide(self, path, family: str) -> None:
        header, rows = self.wide_rows(family)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_features": len(self.cells),
            "n_tested": sum(c.status == OK for c in self.cells),
            "families": {f: {"n_tested": sum(c.status == OK for c in self.family(f)),
                             "n_significant": sum(1 for c in self.significant() if c.family == f)}
                         for f in self.families},
            "significant": [asdict(c) for c in self.significant()],
        }


def _num(v):
    return "" if v is None else repr(float(v))


def assoc_report(matrix: FeatureMatrix, outcome: Sequence[float] | None = None, alpha: float = ALPHA,
                 z_threshold: float = Z_THRESHOLD, family_of: Callable[[str], str] = default_family,
                 restrict_to_users: bool = True, features: Iterable[str] | None = None) -> AssocReport:
    """Correlate every feature with the outcome (CGPA by default).

    Category features use only the students active in that category and
    period.  Cells with fewer than three students are ``N/A``; constant
    inputs are marked ``ConstantInput``.
    """
    y_all = matrix.outcome if outcome is None else np.asarray(outcome, dtype=np.float64)
    cols = range(len(matrix.names)) if features is None else [matrix.index(f) for f in features]
    cells = []
    for j in cols:
        name = matrix.names[j]
        fam = family_of(name)
        rows = _user_rows(matrix, j, restrict_to_users)
        n = int(rows.sum())
        if n < 3:
            cells.append(AssocCell(name, fam, n, None, None, None, None, NA))
            continue
        try:
            res = correlate(matrix.values[rows, j], y_all[rows], alpha, z_threshold)
        except ConstantInput:
            cells.append(AssocCell(name, fam, n, None, None, None, None, CONSTANT))
            continue
        cells.append(AssocCell(name, fam, n, res.method.value, res.coef, res.p, None, OK))
    cells = _adjust(cells, lambda c: c.family, lambda c, q: replace(c, p_adj=q))
    return AssocReport(tuple(cells), alpha)


# ----------------------------------------------------------- group compare

@dataclass(frozen=True)
class CompareCell:
    feature: str
    family: str
    n_high: int
    n_low: int
    high_mean: float | None
    high_sd: float | None
    low_mean: float | None
    low_sd: float | None
    test: str | None
    statistic: float | None
    p: float | None
    p_adj: float | None
    status: str


@dataclass(frozen=True)
class CompareReport:
    cells: tuple[CompareCell, ...]
    alpha: float
    mode: str

    def cell(self, feature: str) -> CompareCell:
        for c in self.cells:
            if c.feature == feature:
                return c
        raise KeyError(feature)

    def significant(self) -> list[CompareCell]:
        return [c for c in self.cells if c.status == OK and c.p_adj < self.alpha]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", "family", "n_high", "n_low", "high_mean", "high_sd", "low_mean",
                             "low_sd", "test", "statistic", "p", "p_adj", "status"])
            for c in self.cells:
                writer.writerow([c.feature, c.family, c.n_high, c.n_low, _num(c.high_mean), _num(c.high_sd),
                                 _num(c.low_mean), _num(c.low_sd), c.test or "", _num(c.statistic),
                                 _num(c.p), _num(c.p_adj), c.status])

    def summary(self) -> dict:
        return {"mode": self.mode, "alpha": self.alpha, "n_features": len(self.cells),
                "n_tested": sum(c.status == OK for c in self.cells),
                "significant": [asdict(c) for c in self.significant()]}


def _compare_cell(name, fam, high, low):
    if len(high) < 1 or len(low) < 1 or len(high) + len(low) < 3:
        return CompareCell(name, fam, len(high), len(low), None, None, None, None, None, None, None, None, NA)
    hs, ls = summarize(high), summarize(low)
    try:
        res = compare_groups(high, low)
    except StatsError:
        return CompareCell(name, fam, hs.n, ls.n, hs.mean, hs.sd, ls.mean, ls.sd, None, None, None, None,
                           CONSTANT)
    return CompareCell(name, fam, hs.n, ls.n, hs.mean, hs.sd, ls.mean, ls.sd, res.test.value,
                       res.statistic, res.p, None, OK)


def compare_by_cgpa(matrix: FeatureMatrix, high: float = 3.5, low: float = 3.0, alpha: float = ALPHA,
                    family_of: Callable[[str], str] = default_family, restrict_to_users: bool = True,
                    features: Iterable[str] | None = None) -> CompareReport:
    """Usage of high vs low CGPA holders, feature by feature."""
    split = split_by_cgpa(matrix.outcome_map, high, low)
    hi = np.isin(matrix.student_ids, split.high_ids)
    lo = np.isin(matrix.student_ids, split.low_ids)
    cols = range(len(matrix.names)) if features is None else [matrix.index(f) for f in features]
    cells = []
    for j in cols:
        name = matrix.names[j]
        rows = _user_rows(matrix, j, restrict_to_users)
        cells.append(_compare_cell(name, family_of(name), matrix.values[hi & rows, j],
                                   matrix.values[lo & rows, j]))
    cells = _adjust(cells, lambda c: c.family, lambda c, q: replace(c, p_adj=q))
    return CompareReport(tuple(cells), alpha, "cgpa")


def compare_by_usage(matrix: FeatureMatrix, alpha: float = ALPHA,
                     family_of: Callable[[str], str] = default_family, restrict_to_users: bool = True,
                     features: Iterable[str] | None = None) -> CompareReport:
    """CGPA of high vs low users (top and bottom thirds) of each feature."""
    cols = range(len(matrix.names)) if features is None else [matrix.index(f) for f in features]
    cgpa = matrix.outcome_map
    cells = []
    for j in cols:
        name = matrix.names[j]
        rows = _user_rows(matrix, j, restrict_to_users)
        ids = [sid for sid, keep in zip(matrix.student_ids, rows) if keep]
        vals = matrix.values[rows, j]
        if len(ids) < 3:
            cells.append(_compare_cell(name, family_of(name), [], []))
            continue
        split: GroupSplit = split_tertiles(dict(zip(ids, vals.tolist())))
        cells.append(_compare_cell(name, family_of(name), np.array([cgpa[s] for s in split.high_ids]),
                                   np.array([cgpa[s] for s in split.low_ids])))
    cells = _adjust(cells, lambda c: c.family, lambda c, q: replace(c, p_adj=q))
    return CompareReport(tuple(cells), alpha, "tertile")


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

