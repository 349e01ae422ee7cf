"""CGPA prediction: selection, scaling, split, grid-search CV, voting, evaluation.

The pipeline runs in a fixed order on a :class:`~appusage.featurize.FeatureMatrix`:

1. seeded 70:30 train/test split;
2. feature selection on the training rows (``leakage="strict"``) or on all
   rows (``leakage="paper"``);
3. z-scoring with training-row statistics;
4. 5-fold grid-search CV per estimator family on the training rows, the
   folds shared by every family and hyperparameter combination;
5. a voting ensemble averaging the three best families;
6. test-set MAE, overfit gap (validation minus training MAE in CV) and the
   correlation of predicted with actual CGPA.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConstantInput, TooFewFamilies, TooFewSamples
from ..featurize import CORE_METRICS, FeatureMatrix, parse_feature_name
from ..stats.core import CorrResult, correlate
from .models import ElasticNet, Knn, Lasso, MeanBaseline, Voting

CGPA_RANGE = (0.0, 4.0)
LAMBDA_GRID = tuple(float(v) for v in np.geomspace(1e-3, 10.0, 9))

DEFAULT_GRIDS: dict[str, dict[str, tuple]] = {
    "knn": {"k": (3, 5, 7, 9, 11), "weighting": ("uniform", "distance")},
    "lasso": {"lambda": LAMBDA_GRID},
    "enet": {"lambda": LAMBDA_GRID, "l1_ratio": (0.2, 0.5, 0.8)},
    "baseline": {},
}


class EmptySelection(UserWarning):
    """No feature passed the selection rule; the fallback set is used."""


def make_estimator(family: str, params: Mapping):
    if family == "knn":
        return Knn(params.get("k", 5), params.get("weighting", "uniform"))
    if family == "lasso":
        return Lasso(params.get("lambda", 1.0))
    if family == "enet":
        return ElasticNet(params.get("lambda", 1.0), params.get("l1_ratio", 0.5))
    if family == "baseline":
        return MeanBaseline()
    raise ValueError(f"unknown estimator family {family!r}")


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    grid: Mapping[str, Sequence] = field(default_factory=dict)

    @classmethod
    def default(cls, family: str) -> "EstimatorSpec":
        return cls(family, DEFAULT_GRIDS[family])

    def combinations(self) -> list[dict]:
        keys = list(self.grid)
        if any(len(self.grid[k]) == 0 for k in keys):
            raise ValueError(f"{self.family}: empty hyperparameter list")
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]


@dataclass(frozen=True)
class SelectionSpec:
    strategy: str = "corr"          # corr | lasso | enet
    alpha: float = 0.05
    core_metrics_only: bool = False
    leakage_mode: str = "strict"    # strict | paper
    fallback_k: int = 10

    def __post_init__(self):
        if self.strategy not in ("corr", "lasso", "enet"):
            raise ValueError(f"unknown selection strategy {self.strategy!r}")
        if self.leakage_mode not in ("strict", "paper"):
            raise ValueError(f"unknown leakage mode {self.leakage_mode!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class FoldScore:
    train_mae: float
    val_mae: float


@dataclass(frozen=True)
class CVResult:
    family: str
    per_fold: tuple[FoldScore, ...]
    chosen_hypers: dict
    grid_scores: tuple[tuple[str, float, float], ...] = ()

    @property
    def mean_train_mae(self) -> float:
        return float(np.mean([f.train_mae for f in self.per_fold]))

    @property
    def mean_val_mae(self) -> float:
        return float(np.mean([f.val_mae for f in self.per_fold]))

    @property
    def overfit_gap(self) -> float:
        return self.mean_val_mae - self.mean_train_mae


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def apply(self, X) -> np.ndarray:
        return standardize_apply(self, X)


def standardize_fit(X) -> Scaler:
    # column sums depend on memory layout; fix it so any slicing order gives the same bits
    X = np.ascontiguousarray(X, dtype=np.float64)
    if len(X) == 0:
        raise TooFewSamples("cannot fit a scaler on zero rows")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    constant = ~(sd > 0)
    return Scaler(mean, sd, constant)


def standardize_apply(scaler: Scaler, X) -> np.ndarray:
    """z-score with training statistics; constant columns pass through unscaled."""
    X = np.asarray(X, dtype=np.float64)
    safe_sd = np.where(scaler.constant, 1.0, scaler.sd)
    safe_mean = np.where(scaler.constant, 0.0, scaler.mean)
    return (X - safe_mean) / safe_sd


def split_train_test(n: int, train_frac: float = 0.7, seed: int = 0):
    """Seeded shuffle split; the test part gets ceil((1 - train_frac) * n) rows."""
    if n < 10:
        raise TooFewSamples(f"need at least 10 rows to split, got {n}")
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    n_test = math.ceil(round((1.0 - train_frac) * n, 9))
    perm = np.random.default_rng([seed, 0]).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def fold_indices(n: int, folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle cut into ``folds`` contiguous validation blocks."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise TooFewSamples(f"{n} rows cannot fill {folds} folds")
    perm = np.random.default_rng([seed, 1]).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, folds)]


def _clip(pred, clip):
    return pred if clip is None else np.clip(pred, *clip)


def _mae(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(a) - np.asarray(b))))


def _fold_scores(make, X, y, folds, clip):
    scores = []
    all_idx = np.arange(len(y))
    for val in folds:
        tr = np.setdiff1d(all_idx, val)
        model = make().fit(X[tr], y[tr])
        scores.append(FoldScore(_mae(_clip(model.predict(X[tr]), clip), y[tr]),
                                _mae(_clip(model.predict(X[val]), clip), y[val])))
    return tuple(scores)


def _simplicity_key(params: Mapping):
    # larger lambda, then larger k, then lexicographic
    return (-params.get("lambda", 0.0), -params.get("k", 0), json.dumps(params, sort_keys=True))


def grid_search_cv(X, y, spec: EstimatorSpec, folds: int = 5, seed: int = 0,
                   clip=CGPA_RANGE) -> CVResult:
    """Pick the hyperparameters with the lowest mean validation MAE."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fold_sets = fold_indices(len(y), folds, seed)
    min_train = len(y) - max(len(f) for f in fold_sets)
    best = None
    grid_scores = []
    for params in spec.combinations():
        if spec.family == "knn" and params["k"] > min_train:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scores = _fold_scores(lambda: make_estimator(spec.family, params), X, y, fold_sets, clip)
        val = float(np.mean([s.val_mae for s in scores]))
        grid_scores.append((json.dumps(params, sort_keys=True), float(np.mean([s.train_mae for s in scores])), val))
        key = (val, _simplicity_key(params))
        if best is None or key < best[0]:
            best = (key, params, scores)
    if best is None:
        raise ValueError(f"{spec.family}: no valid hyperparameter combination")
    return CVResult(spec.family, best[2], dict(best[1]), tuple(grid_scores))


# ------------------------------------------------------------ selection

def _candidates(names: Sequence[str], core_only: bool) -> list[int]:
    if not core_only:
        return list(range(len(names)))
    return [j for j, n in enumerate(names) if parse_feature_name(n)[1] in CORE_METRICS]


def _corr_pvalues(X, y, cols):
    out = {}
    for j in cols:
        try:
            out[j] = correlate(X[:, j], y).p
        except ConstantInput:
            continue
    return out


def select_features(X, y, names: Sequence[str], spec: SelectionSpec = SelectionSpec(), folds: int = 5,
                    seed: int = 0) -> list[str]:
    """Names of the features kept by ``spec`` on the rows given.

    ``corr`` keeps features whose automatically chosen correlation with the
    outcome has p < alpha.  ``lasso``/``enet`` keep the non-zero coefficients
    at the CV-best regularisation.  If nothing survives, the ``fallback_k``
    features with the lowest correlation p are used and a warning is issued.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cols = _candidates(names, spec.core_metrics_only)
    cols = [j for j in cols if np.ptp(X[:, j]) > 0]
    chosen: list[int]
    if spec.strategy == "corr":
        pvals = _corr_pvalues(X, y, cols)
        if spec.alpha >= 1.0:
            chosen = list(pvals)
        else:
            chosen = [j for j, p in pvals.items() if p < spec.alpha]
    else:
        sub = X[:, cols]
        scaled = standardize_apply(standardize_fit(sub), sub)
        family = "lasso" if spec.strategy == "lasso" else "enet"
        cv = grid_search_cv(scaled, y, EstimatorSpec.default(family), folds, seed, clip=None)
        model = make_estimator(family, cv.chosen_hypers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit(scaled, y)
        chosen = [cols[i] for i in np.flatnonzero(model.coef_ != 0)]
    if not chosen:
        pvals = _corr_pvalues(X, y, cols)
        chosen = sorted(pvals, key=lambda j: (pvals[j], j))[:spec.fallback_k]
        warnings.warn(f"no feature selected; falling back to the {len(chosen)} lowest-p features",
                      EmptySelection, stacklevel=2)
    return [names[j] for j in sorted(chosen)]


# ------------------------------------------------------------ evaluation

@dataclass(frozen=True)
class PredictionReport:
    model: str
    params: dict
    n_train: int
    n_test: int
    test_mae: float
    cv: CVResult | None
    pred_actual_corr: CorrResult | None
    per_student: dict

    @property
    def overfit_gap(self) -> float | None:
        return None if self.cv is None else self.cv.overfit_gap

    def to_dict(self) -> dict:
        corr = None
        if self.pred_actual_corr is not None:
            c = self.pred_actual_corr
            corr = {"coef": c.coef, "p": c.p, "method": c.method.value, "n": c.n}
        return {
            "model": self.model,
            "params": self.params,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "test_mae": self.test_mae,
            "cv": None if self.cv is None else {
                "mean_train_mae": self.cv.mean_train_mae,
                "mean_val_mae": self.cv.mean_val_mae,
                "overfit_gap": self.cv.overfit_gap,
                "chosen_hypers": self.cv.chosen_hypers,
                "per_fold": [asdict(f) for f in self.cv.per_fold],
            },
            "pred_actual_corr": corr,
        }


def evaluate(model, X_test, y_test, ids: Sequence[str] | None = None, cv: CVResult | None = None,
             n_train: int = 0, clip=CGPA_RANGE) -> PredictionReport:
    """Score a fitted model on held-out rows; predictions are clamped to the CGPA range."""
    y_test = np.asarray(y_test, dtype=np.float64)
    if len(y_test) == 0:
        raise TooFewSamples("empty test set")
    pred = _clip(model.predict(np.asarray(X_test, dtype=np.float64)), clip)
    if ids is None:
        ids = [str(i) for i in range(len(y_test))]
    try:
        corr = correlate(pred, y_test)
    except (ConstantInput, TooFewSamples):
        corr = None
    return PredictionReport(getattr(model, "family", type(model).__name__), dict(getattr(model, "params", {})),
                            n_train, len(y_test), _mae(pred, y_test), cv, corr,
                            {sid: (float(a), float(p)) for sid, a, p in zip(ids, y_test, pred)})


def build_voting(X, y, registry: Sequence[EstimatorSpec], folds: int = 5, seed: int = 0, clip=CGPA_RANGE,
                 cv_results: Mapping[str, CVResult] | None = None):
    """Voting ensemble of the three families with the best CV MAE.

    Returns ``(ensemble, cv_result)``; the ensemble CV record re-fits the
    members with their chosen hyperparameters on the same folds.
    """
    families = list(dict.fromkeys(s.family for s in registry))
    if len(families) < 3:
        raise TooFewFamilies(f"voting needs 3 distinct families, got {families}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cv_results = dict(cv_results or {})
    for spec in registry:
        if spec.family not in cv_results:
            cv_results[spec.family] = grid_search_cv(X, y, spec, folds, seed, clip)
    ranked = sorted(families, key=lambda f: (cv_results[f].mean_val_mae, families.index(f)))[:3]
    hypers = {f: cv_results[f].chosen_hypers for f in ranked}

    def make():
        return Voting([make_estimator(f, hypers[f]) for f in ranked])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scores = _fold_scores(make, X, y, fold_indices(len(y), folds, seed), clip)
        ensemble = make().fit(X, y)
    return ensemble, CVResult("voting", scores, {"members": ranked, **{f: hypers[f] for f in ranked}})


# ------------------------------------------------------------ full pipeline

@dataclass(frozen=True)
class PipelineConfig:
    selection: SelectionSpec = SelectionSpec()
    train_frac: float = 0.7
    folds: int = 5
    seed: int = 0
    estimators: tuple[str, ...] = ("knn", "lasso", "enet")
    grids: Mapping[str, Mapping[str, Sequence]] | None = None

    def spec(self, family: str) -> EstimatorSpec:
        grids = dict(DEFAULT_GRIDS)
        grids.update(self.grids or {})
        return EstimatorSpec(family, grids[family])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d


@dataclass(frozen=True)
class PipelineResult:
    config: PipelineConfig
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    selected_features: tuple[str, ...]
    scaler: Scaler
    cv: dict
    reports: dict
    best: str

    @property
    def report(self) -> PredictionReport:
        return self.reports[self.best]

    @property
    def baseline(self) -> PredictionReport:
        return self.reports["baseline"]

    def table_rows(self) -> list[dict]:
        """One row per model: CV and test performance side by side."""
        rows = []
        for name, rep in self.reports.items():
            c = rep.pred_actual_corr
            rows.append({
                "model": name,
                "cv_n": rep.n_train,
                "cv_train_mae": rep.cv.mean_train_mae,
                "cv_val_mae": rep.cv.mean_val_mae,
                "test_n": rep.n_test,
                "test_mae": rep.test_mae,
                "corr_method": c.method.value if c else None,
                "corr_coef": c.coef if c else None,
                "corr_p": c.p if c else None,
            })
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_train": len(self.train_ids),
            "n_test": len(self.test_ids),
            "selected_features": list(self.selected_features),
            "scaler": {"mean": self.scaler.mean.tolist(), "sd": self.scaler.sd.tolist(),
                       "constant": self.scaler.constant.tolist()},
            "best": self.best,
            "models": {k: v.to_dict() for k, v in self.reports.items()},
            "table": self.table_rows(),
        }


def run_pipeline(matrix: FeatureMatrix, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    y = matrix.outcome
    train, test = split_train_test(len(y), config.train_frac, config.seed)
    sel_rows = train if config.selection.leakage_mode == "strict" else np.arange(len(y))
    selected = select_features(matrix.values[sel_rows], y[sel_rows], matrix.names, config.selection,
                               config.folds, config.seed)
    cols = [matrix.index(n) for n in selected]
    X = matrix.values[:, cols]
    scaler = standardize_fit(X[train])
    Xtr, Xte = scaler.apply(X[train]), scaler.apply(X[test])
    ytr, yte = y[train], y[test]
    ids = matrix.student_ids
    test_ids = [ids[i] for i in test]

    cv = {}
    reports = {}
    for fam in dict.fromkeys(config.estimators + ("baseline",)):
        spec = config.spec(fam)
        cv[fam] = grid_search_cv(Xtr, ytr, spec, config.folds, config.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = make_estimator(fam, cv[fam].chosen_hypers).fit(Xtr, ytr)
        reports[fam] = evaluate(model, Xte, yte, test_ids, cv[fam], len(train))
    families = [f for f in dict.fromkeys(config.estimators)]
    if len(families) >= 3:
        ensemble, cv["voting"] = build_voting(Xtr, ytr, [config.spec(f) for f in families], config.folds,
                                              config.seed, cv_results={f: cv[f] for f in families})
        reports["voting"] = evaluate(ensemble, Xte, yte, test_ids, cv["voting"], len(train))
    best = min((k for k in reports if k != "baseline"), key=lambda k: (cv[k].mean_val_mae, k))
    return PipelineResult(config, tuple(ids[i] for i in train), tuple(test_ids), tuple(selected), scaler, cv,
                          reports, best)
