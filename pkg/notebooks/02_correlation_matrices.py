"""
Multi-scale correlation matrices
================================

Each step of p points becomes an n x n x C stack of windowed inner
products, one channel per window length. A model input is that stack at
the current step plus the h steps before it (and optional seasonal steps).
"""

import numpy as np

from rsmgan.datagen import DatasetSpec, generate_dataset
from rsmgan.mcm import McmConfig, assemble_inputs, build_mcm, zscore

ds = generate_dataset(DatasetSpec(n=10, T=10_080, seed=0))
frame = ds.frame.copy()
frame.values = zscore(frame.values, frame.T // 2)

cfg = McmConfig(windows=(5, 10, 30), step=5, history=4)
seq = build_mcm(frame, cfg)
print(seq.matrices.shape, "first valid step", seq.first_valid)

# symmetric, positive semi-definite
m = seq.matrices[100, :, :, 2]
print(np.allclose(m, m.T), np.linalg.eigvalsh(m).min())

# the anomaly shows up as a bright row/column cross
a = ds.test_labels[0]
k = a.start // cfg.step + 2
print("diagonal at an anomalous step:", np.round(np.diag(seq.matrices[k, :, :, 0]), 2))
print("root causes:", a.root_causes)

inputs = assemble_inputs(seq, cfg)
print("slots", inputs.slots.shape, "offsets", inputs.slot_offsets)

# hourly data: add a daily and weekly slot, masked when they fall on a holiday
hourly = generate_dataset(DatasetSpec(n=4, T=2160, patterns=("daily", "weekly"), steps_per_day=24,
                                      holidays=6, test_anomalies=0, seed=1))
hcfg = McmConfig(windows=(3, 6, 12), step=1, history=4, seasonal_counts=(1, 1), seasonal_periods=(24, 168))
hin = assemble_inputs(build_mcm(hourly.frame, hcfg), hcfg)
print("masked slots:", int((~hin.mask).sum()), "of", hin.mask.size)
