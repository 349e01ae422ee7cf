"""
Usage-based clustering with an automatically chosen eps
=======================================================

Standardizes overall duration and launches, reads eps off the knee of the
4-distance curve and runs DBSCAN.
"""
import numpy as np

from appusage.cluster import cluster_students, largest_cluster_ids
from appusage.featurize import feature_matrix
from appusage.synth import SynthConfig, gen_cohort

cohort, _ = gen_cohort(SynthConfig(n_students=120, seed=8))
m = feature_matrix(cohort)

run = cluster_students(m)
curve = run.curve
print("k-distance curve (every 10th value):", np.round(curve[::10], 3))
print("eps at the knee:", round(run.assignment.eps, 3))
print("cluster sizes:", run.assignment.cluster_sizes, " noise:", len(run.assignment.noise))

big = largest_cluster_ids(run.assignment)
rows = [m.student_ids.index(s) for s in big]
minutes = m.column("phone.duration.whole")[rows] / 7 / 60_000
print(f"largest cluster: {len(big)} students, daily minutes {minutes.min():.0f}-{minutes.max():.0f}")

# a smaller eps leaves more students as noise, never fewer
for eps in sorted((0.2, 0.4, 1.0, run.assignment.eps)):
    r = cluster_students(m, eps=eps)
    print(f"eps={eps:.2f}: {len(r.assignment.cluster_sizes)} cluster(s), {len(r.assignment.noise)} noise")
