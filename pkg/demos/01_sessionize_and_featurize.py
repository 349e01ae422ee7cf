"""
From raw foreground/background events to a feature matrix
=========================================================

Builds a tiny event log by hand, pairs it into usage intervals, groups the
intervals into sessions and then featurizes a whole synthetic cohort.
"""
import numpy as np

from appusage.featurize import feature_matrix, featurize_log
from appusage.ingest import CategoryMap, EventKind, EventLog, UsageEvent
from appusage.sessionizer import build_sessions, pair_intervals
from appusage.synth import SynthConfig, gen_cohort

H = 3_600_000
FG, BG = EventKind.FOREGROUND, EventKind.BACKGROUND

# one evening: ten minutes of video, a 30 s chat check, then twenty more minutes
# of video in a different app.  times are UTC ms; the student is at UTC+6.
t0 = 13 * H
events = [
    UsageEvent(t0, "com.google.android.youtube", FG),
    UsageEvent(t0 + 600_000, "com.google.android.youtube", BG),
    UsageEvent(t0 + 620_000, "com.whatsapp", FG),
    UsageEvent(t0 + 650_000, "com.whatsapp", BG),
    UsageEvent(t0 + H, "org.videolan.vlc", FG),
    UsageEvent(t0 + H + 1_200_000, "org.videolan.vlc", BG),
]
log = EventLog.from_events("demo", events, window_end=t0 + 2 * H, tz_offset_minutes=360)

intervals, stats = pair_intervals(log)
for iv in intervals:
    print(f"{iv.package:32s} {iv.duration / 1000:7.0f} s")
print("unmatched fg/bg:", stats.unmatched_foreground, stats.unmatched_background)

# a gap of at most 45 s keeps intervals in the same session
for s in build_sessions(intervals):
    print(f"session of {len(s.intervals)} interval(s), {s.spent_ms / 1000:.0f} s -> {s.kind.value}")

cats = CategoryMap.default()
vec, sessions, _ = featurize_log(log, cats)
print("\nnon-zero features for this student:")
for name, value in zip(vec.names, vec.values):
    if value and name.startswith(("Video", "phone.sessions", "phone.duration")):
        print(f"  {name:45s} {value:g}")

# the same thing for a whole synthetic cohort
cohort, _ = gen_cohort(SynthConfig(n_students=30, seed=1))
m = feature_matrix(cohort)
print("\ncohort matrix:", m.shape)
print("students with any evening video use:",
      int(m.mask[:, m.index("Video Players & Editors.duration.evening")].sum()))
print("median daily phone minutes:", np.median(m.column("phone.duration.whole")) / 7 / 60_000)
