"""Density clustering of students by overall usage.

Points are standardised per dimension, eps is read off the knee of the
sorted k-distance curve, and DBSCAN groups the students.  The largest
cluster is the subgroup of students with similar phone use.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import AllNoise, TooFewPoints

DEFAULT_FEATURES = ("phone.duration.whole", "phone.launches.whole")
DEFAULT_MIN_PTS = 4


class DegenerateCurve(UserWarning):
    """The k-distance curve has no knee."""


@dataclass(frozen=True)
class ClusterAssignment:
    labels: Mapping[str, int]
    eps: float
    min_pts: int

    @property
    def cluster_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {}
        for lab in self.labels.values():
            if lab >= 0:
                sizes[lab] = sizes.get(lab, 0) + 1
        return dict(sorted(sizes.items()))

    @property
    def noise(self) -> list[str]:
        return [sid for sid, lab in self.labels.items() if lab < 0]

    def members(self, label: int) -> list[str]:
        return [sid for sid, lab in self.labels.items() if lab == label]


def standardize(points) -> np.ndarray:
    x = np.ascontiguousarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    sd = x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (x - x.mean(axis=0)) / sd


def kdist_curve(points, k: int = DEFAULT_MIN_PTS, standardized: bool = True) -> np.ndarray:
    """Ascending distances of every point to its k-th nearest other point."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) <= k:
        raise TooFewPoints(f"need more than k={k} points, got {len(x)}")
    if standardized:
        x = standardize(x)
    d = cdist(x, x)
    np.fill_diagonal(d, np.inf)
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    return np.sort(kth)


def select_eps(curve: Sequence[float]) -> float:
    """eps at the knee: the index of the largest discrete second difference.

    A constant curve returns its value and a straight line its median, both
    with a :class:`DegenerateCurve` warning.
    """
    c = np.asarray(curve, dtype=np.float64)
    if len(c) < 3:
        raise TooFewPoints("k-distance curve needs at least 3 values")
    if np.ptp(c) == 0:
        warnings.warn("k-distance curve is constant; using its value as eps", DegenerateCurve, stacklevel=2)
        return float(c[0])
    d2 = c[:-2] - 2 * c[1:-1] + c[2:]
    if d2.max() <= 1e-12 * np.abs(c).max():
        warnings.warn("k-distance curve has no knee; using its median as eps", DegenerateCurve, stacklevel=2)
        return float(np.median(c))
    return float(c[int(np.argmax(d2)) + 1])


def dbscan_labels(points, eps: float, min_pts: int = DEFAULT_MIN_PTS) -> np.ndarray:
    """DBSCAN labels for the rows of ``points`` (-1 marks noise).

    Neighbourhoods are closed balls (distance <= eps) and include the point
    itself.  Points are scanned in input order; a border point joins the first
    cluster whose expansion reaches it.  Cluster ids are 0, 1, ... in order of
    discovery.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    neighbors = [np.flatnonzero(row <= eps) for row in cdist(x, x)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = [i]
        head = 0
        while head < len(queue):
            p = queue[head]
            head += 1
            for q in neighbors[p]:
                if labels[q] == -1:
                    labels[q] = cluster
                if core[q] and not visited[q]:
                    visited[q] = True
                    queue.append(q)
        cluster += 1
    return labels


def dbscan(points, eps: float, min_pts: int = DEFAULT_MIN_PTS, ids: Sequence[str] | None = None) -> ClusterAssignment:
    labels = dbscan_labels(points, eps, min_pts)
    if ids is None:
        ids = [str(i) for i in range(len(labels))]
    return ClusterAssignment(dict(zip(ids, labels.tolist())), float(eps), min_pts)


def largest_cluster_ids(assignment: ClusterAssignment) -> list[str]:
    sizes = assignment.cluster_sizes
    if not sizes:
        raise AllNoise("every point is noise")
    best = min(sizes, key=lambda lab: (-sizes[lab], lab))
    return assignment.members(best)


def largest_cluster(assignment: ClusterAssignment, cohort):
    """Restrict a cohort (or feature matrix) to the largest cluster's members."""
    return cohort.subset(largest_cluster_ids(assignment))


@dataclass(frozen=True)
class ClusterRun:
    assignment: ClusterAssignment
    curve: np.ndarray
    features: tuple[str, ...]


def cluster_students(matrix, features: Sequence[str] = DEFAULT_FEATURES, eps: float | str = "auto",
                     min_pts: int = DEFAULT_MIN_PTS, k: int | None = None) -> ClusterRun:
    """Standardise the chosen feature columns, pick eps and run DBSCAN."""
    x = standardize(np.column_stack([matrix.column(f) for f in features]))
    curve = kdist_curve(x, k or min_pts, standardized=False)
    eps_value = select_eps(curve) if eps == "auto" else float(eps)
    if eps_value <= 0:
        # duplicate points can put the knee at zero distance
        eps_value = float(curve[curve > 0][0]) if np.any(curve > 0) else 1.0
    return ClusterRun(dbscan(x, eps_value, min_pts, matrix.student_ids), curve, tuple(features))
