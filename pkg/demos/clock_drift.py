"""
Drift of the recovered clock
============================

Fourteen hours of one-second offsets between the recovered clock and the
reference, summarized the way a long overnight run would be.
"""
from __future__ import annotations

import numpy as np

from qcoexist import ClockSpec, DriftModel, drift_stats, simulate_offsets

series = simulate_offsets(ClockSpec(), DriftModel(), 14 * 3600, 1.0, seed=0)
stats = drift_stats(series, 100.0)

print(f"overall jitter: {stats.sigma:.2f} ps")
print(f"peak-to-peak of 100 s means: {stats.peak_to_peak:.2f} ps")

# %%
# A coarse text trace of the hourly mean offset.
hourly = series.offsets[: 14 * 3600].reshape(14, 3600).mean(axis=1)
for h, m in enumerate(hourly):
    bar = "#" * int(round(10 + 4 * m))
    print(f"{h:2d} h {m:+6.2f} ps {bar}")

# %%
# Turning the drift off leaves only white jitter.
flat = drift_stats(simulate_offsets(ClockSpec(), DriftModel.none(), 14 * 3600, 1.0, seed=0), 100.0)
print(f"\nwithout drift: jitter {flat.sigma:.2f} ps, peak-to-peak {flat.peak_to_peak:.2f} ps, "
      f"four standard errors of a 100 s mean: {4 * 2.2 / np.sqrt(100):.2f} ps")
