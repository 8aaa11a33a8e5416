"""
Synthetic seasonal series with injected anomalies
=================================================

Ten noisy sinusoids sampled every minute for one week. Anomalies are
shocks on a handful of series at once; holidays multiply every series
by three for a whole day.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from rsmgan.datagen import DatasetSpec, generate_dataset, split_bounds

# one week of minute data, ten test anomalies
ds = generate_dataset(DatasetSpec(n=10, T=10_080, test_anomalies=10, seed=0))
print(ds.frame.values.shape)

split = split_bounds(ds.frame.T)
print("train", split.train, "validation", split.validation, "test", split.test)

for a in ds.test_labels:
    print(f"{a.start:5d}-{a.end:5d}  {a.direction.value:5s}  x{a.magnitude:.2f}  causes {a.root_causes}")

# the first anomaly, with its root-cause series highlighted
a = ds.test_labels[0]
lo, hi = a.start - 200, a.end + 200
fig, ax = plt.subplots(figsize=(10, 4))
for i in range(ds.frame.n):
    ax.plot(np.arange(lo, hi), ds.frame.values[i, lo:hi] + 3 * i,
            lw=1.5 if i in a.root_causes else 0.5, color="C3" if i in a.root_causes else "0.5")
ax.axvspan(a.start, a.end, alpha=0.2)
fig.savefig("synthetic_anomaly.png", dpi=100)

# hourly data with a daily and weekly cycle and six holidays
hourly = generate_dataset(DatasetSpec(n=4, T=2160, patterns=("daily", "weekly"), steps_per_day=24,
                                      holidays=6, test_anomalies=0, seed=1))
print("holiday days", sorted({s // 24 for s in hourly.holiday_steps}))
