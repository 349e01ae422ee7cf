"""Statistical kernels, association tests and the report batteries."""
from .core import (
    ALPHA,
    Z_THRESHOLD,
    CorrMethod,
    CorrResult,
    GroupSplit,
    GroupSummary,
    NormalityResult,
    SplitRule,
    TestKind,
    TestResult,
    bh_adjust,
    choose_corr,
    compare_groups,
    correlate,
    jarque_bera,
    levene,
    mann_whitney,
    normality,
    pearson,
    rank_average,
    spearman,
    split_by_cgpa,
    split_tertiles,
    student_t,
    welch_t,
    zscore_outliers,
)
from .kernels import chi2_cdf, chi2_sf, f_cdf, f_sf, normal_cdf, normal_sf, t_cdf, t_sf
from .report import AssocReport, CompareReport, assoc_report, compare_by_cgpa, compare_by_usage, default_family
