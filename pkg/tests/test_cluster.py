import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appusage.cluster import (
    ClusterAssignment,
    DegenerateCurve,
    cluster_students,
    dbscan,
    dbscan_labels,
    kdist_curve,
    largest_cluster_ids,
    select_eps,
    standardize,
)
from appusage.errors import AllNoise, TooFewPoints
from appusage.featurize import feature_matrix
from appusage.synth import SynthConfig, gen_cohort

import oracles


def check_against_oracle(x, eps, min_pts):
    labels = dbscan_labels(x, eps, min_pts)
    comps, noise, border = oracles.dbscan_partition(x, eps, min_pts)
    assert set(np.flatnonzero(labels < 0).tolist()) == noise
    clusters = {}
    for i, lab in enumerate(labels):
        if lab >= 0:
            clusters.setdefault(lab, set()).add(i)
    # every cluster is one core component plus border points it may claim
    assert len(clusters) == len(comps)
    for members in clusters.values():
        (comp,) = [c for c in comps if c & members]
        assert comp <= members
        for b in members - comp:
            assert comp in border[b]
    return labels


def test_matches_partition_oracle_on_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        dim = int(rng.integers(1, 4))
        x = np.round(rng.normal(size=(n, dim)) * 3, 1)
        eps = float(rng.uniform(0.2, 3.0))
        check_against_oracle(x, eps, int(rng.integers(1, 7)))


def test_hand_case_two_clusters_and_noise():
    a = [[0, 0], [0, 0.1], [0.1, 0], [0.1, 0.1]]
    b = [[5, 5], [5, 5.1], [5.1, 5], [5.1, 5.1]]
    x = np.array(a + b + [[20, 20]])
    labels = dbscan_labels(x, 0.5, 4)
    assert labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, -1]


def test_large_eps_single_cluster_and_strict_min_pts():
    x = np.random.default_rng(1).normal(size=(30, 2))
    assert set(dbscan_labels(x, 1e6, 4).tolist()) == {0}
    assert set(dbscan_labels(x, 1e6, 31).tolist()) == {-1}


def test_invalid_parameters():
    with pytest.raises(ValueError):
        dbscan_labels([[0.0]], 0.0)
    with pytest.raises(ValueError):
        dbscan_labels([[0.0]], 1.0, 0)


def test_select_eps_knee():
    assert select_eps([0.1, 0.1, 0.1, 0.1, 5, 5]) == 0.1


def test_select_eps_degenerate_curves():
    with pytest.warns(DegenerateCurve):
        assert select_eps([1, 2, 3, 4, 5, 6]) == 3.5
    with pytest.warns(DegenerateCurve):
        assert select_eps([2.0] * 7) == 2.0
    with pytest.raises(TooFewPoints):
        select_eps([1, 2])


def test_kdist_curve():
    x = np.arange(5, dtype=float)[:, None]
    assert kdist_curve(x, 1, standardized=False).tolist() == [1, 1, 1, 1, 1]
    assert kdist_curve(x, 2, standardized=False).tolist() == [1, 1, 1, 2, 2]
    with pytest.raises(TooFewPoints):
        kdist_curve(x, 5)
    c = kdist_curve(np.random.default_rng(2).normal(size=(40, 2)))
    assert np.all(np.diff(c) >= 0)


def test_standardize():
    z = standardize(np.random.default_rng(3).normal(5, 3, size=(50, 2)))
    assert np.allclose(z.mean(0), 0) and np.allclose(z.std(0, ddof=1), 1)
    assert np.all(standardize(np.full((4, 1), 7.0)) == 0)


def test_largest_cluster_ids():
    labels = {f"s{i}": 0 for i in range(12)}
    labels.update({f"t{i}": 1 for i in range(80)})
    labels.update({f"n{i}": -1 for i in range(9)})
    a = ClusterAssignment(labels, 0.5, 4)
    assert a.cluster_sizes == {0: 12, 1: 80}
    assert len(a.noise) == 9
    assert largest_cluster_ids(a) == [f"t{i}" for i in range(80)]
    with pytest.raises(AllNoise):
        largest_cluster_ids(ClusterAssignment({"a": -1}, 0.5, 4))


@given(st.integers(0, 10_000))
@settings(max_examples=40)
def test_permutation_keeps_cores_and_noise(seed):
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=(25, 2)) * 2, 1)
    perm = rng.permutation(25)
    a = dbscan_labels(x, 1.0, 3)
    b = dbscan_labels(x[perm], 1.0, 3)
    assert np.array_equal(a[perm] < 0, b < 0)
    # core points share a cluster in one order iff they do in the other
    comps, _, _ = oracles.dbscan_partition(x, 1.0, 3)
    for comp in comps:
        idx = sorted(comp)
        inv = np.argsort(perm)[idx]
        assert len(set(a[idx])) == 1 and len(set(b[inv])) == 1


@given(st.integers(0, 10_000), st.floats(0.1, 2.0), st.floats(0.0, 2.0))
@settings(max_examples=40)
def test_noise_shrinks_with_eps(seed, eps, extra):
    x = np.random.default_rng(seed).normal(size=(30, 2))
    small = set(np.flatnonzero(dbscan_labels(x, eps, 4) < 0))
    large = set(np.flatnonzero(dbscan_labels(x, eps + extra, 4) < 0))
    assert large <= small


def test_cluster_students_end_to_end():
    cohort, _ = gen_cohort(SynthConfig(n_students=40, seed=5))
    m = feature_matrix(cohort)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCurve)
        run = cluster_students(m)
    assert set(run.assignment.labels) == set(m.student_ids)
    assert run.assignment.eps > 0
    assert len(run.curve) == 40
    again = cluster_students(m, eps=run.assignment.eps)
    assert again.assignment.labels == run.assignment.labels
    fixed = dbscan(standardize(np.column_stack([m.column(f) for f in run.features])), 1e6, 4, m.student_ids)
    assert fixed.cluster_sizes == {0: 40}
