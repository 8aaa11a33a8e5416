"""Multi-channel correlation matrices (MCMs) and stacked model inputs."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import SeriesFrame


@dataclass
class McmConfig:
    windows: tuple[int, ...] = (5, 10, 30)
    step: int = 5
    history: int = 4
    seasonal_counts: tuple[int, ...] | None = None  # None: two per seasonal period
    seasonal_periods: tuple[int, ...] = ()  # in raw time points
    smoothing_width: int = 6

    def __post_init__(self):
        self.windows = tuple(int(w) for w in self.windows)
        self.seasonal_periods = tuple(int(s) for s in self.seasonal_periods)
        if self.seasonal_counts is None:
            self.seasonal_counts = (2,) * len(self.seasonal_periods)
        self.seasonal_counts = tuple(int(m) for m in self.seasonal_counts)
        if not self.windows or self.windows[0] <= 0 or any(
                b <= a for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("windows must be positive and strictly increasing")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.history < 0:
            raise ValueError("history must be >= 0")
        if any(m < 0 for m in self.seasonal_counts):
            raise ValueError("seasonal counts must be >= 0")
        if len(self.seasonal_counts) != len(self.seasonal_periods):
            raise ValueError("need one seasonal period per seasonal count")
        if self.smoothing_width < 1:
            raise ValueError("smoothing_width must be >= 1")

    @property
    def channels(self) -> int:
        return len(self.windows)

    @property
    def n_slots(self) -> int:
        return self.history + 1 + sum(self.seasonal_counts)

    def seasonal_lags(self) -> tuple[int, ...]:
        """Seasonal periods converted to whole steps."""
        lags = []
        for period in self.seasonal_periods:
            if period < self.step:
                raise ValueError(f"seasonal period {period} is shorter than the step {self.step}")
            if period % self.step:
                warnings.warn(f"seasonal period {period} is not a multiple of step {self.step}; rounding")
            lags.append(int(round(period / self.step)))
        return tuple(lags)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class McmSequence:
    """``M`` steps of ``n x n x C`` matrices; step ``k`` covers raw points ``[k*p, (k+1)*p)``."""

    matrices: np.ndarray
    step_timestamps: np.ndarray
    holiday_bits: np.ndarray
    step: int
    first_valid: int = 0

    @property
    def M(self) -> int:
        return self.matrices.shape[0]


@dataclass
class ModelInputs:
    """A batch of stacked inputs, one row per target step.

    ``slots`` has shape ``(K, N, n, n, C)`` in chronological order; the last
    slot is the target step itself.
    """

    slots: np.ndarray
    mask: np.ndarray
    step_index: np.ndarray
    slot_offsets: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return self.slots.shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.slots[:, -1]

    def subset(self, idx) -> "ModelInputs":
        return ModelInputs(self.slots[idx], self.mask[idx], self.step_index[idx], self.slot_offsets)


def zscore(values: np.ndarray, train_end: int) -> np.ndarray:
    """Standardise each series with statistics from its first ``train_end`` points."""
    train = values[:, :train_end]
    mean = train.mean(axis=1, keepdims=True)
    std = train.std(axis=1, keepdims=True)
    std[std == 0] = 1.0
    return (values - mean) / std


def step_holidays(holidays: np.ndarray, step: int, M: int) -> np.ndarray:
    """A step is a holiday if any of its raw points is."""
    return holidays[: M * step].reshape(M, step).any(axis=1)


def build_mcm(frame: SeriesFrame | np.ndarray, config: McmConfig) -> McmSequence:
    """Windowed mean inner products of every series pair, one channel per window.

    Entry ``(i, j)`` of channel ``c`` at step ``k`` is
    ``sum(x_i[t] * x_j[t]) / w_c`` over the ``w_c`` points ending at
    ``t = (k + 1) * p - 1``. Windows reaching before the start of the series
    are zero-padded; ``first_valid`` marks the first step with a full window.
    """
    if isinstance(frame, SeriesFrame):
        x, timestamps, holidays = frame.values, frame.timestamps, frame.holidays
    else:
        x = np.asarray(frame, dtype=float)
        timestamps = np.arange(x.shape[1]).astype("datetime64[s]")
        holidays = np.zeros(x.shape[1], dtype=bool)
    n, T = x.shape
    if T < max(config.windows):
        raise ValueError(f"series of length {T} is shorter than the largest window {max(config.windows)}")
    p = config.step
    M = T // p
    ends = (np.arange(M) + 1) * p - 1
    out = np.empty((M, n, n, config.channels))
    padded = np.concatenate([np.zeros((n, max(config.windows))), x], axis=1)
    offset = max(config.windows)
    for c, w in enumerate(config.windows):
        idx = offset + ends[:, None] - np.arange(w)[None, :]  # (M, w)
        xw = padded[:, idx]  # (n, M, w)
        out[..., c] = np.einsum("imk,jmk->mij", xw, xw) / w
    first_valid = -(-max(config.windows) // p) - 1
    return McmSequence(out, timestamps[ends], step_holidays(holidays, p, M), p, first_valid)


def _smoothing_span(width: int) -> tuple[int, int]:
    before = width // 2
    return before, width - 1 - before


def slot_layout(config: McmConfig) -> list[tuple[int, int]]:
    """``(offset, smoothing)`` per slot, oldest first; offset is steps before the target."""
    layout = []
    for lag, m in zip(config.seasonal_lags(), config.seasonal_counts):
        for j in range(1, m + 1):
            layout.append((j * lag, config.smoothing_width))
    layout.extend((k, 1) for k in range(1, config.history + 1))
    layout.sort(key=lambda s: -s[0])
    layout.append((0, 1))
    return layout


def required_history(config: McmConfig) -> int:
    """Steps that must precede a target for every slot to be available."""
    need = 0
    for offset, width in slot_layout(config):
        need = max(need, offset + _smoothing_span(width)[0])
    return need


def assemble_inputs(seq: McmSequence, config: McmConfig,
                    holidays: np.ndarray | None = None,
                    steps: Sequence[int] | None = None,
                    use_mask: bool = True) -> ModelInputs:
    """Stack history, current and smoothed seasonal slots for each target step.

    Seasonal slots average ``smoothing_width`` neighbouring steps centred on
    the seasonal step (clipped so no step after the target is used). A slot
    whose steps touch a holiday gets mask bit 0; the target slot is never
    masked. Targets without full history are dropped.
    """
    bits = seq.holiday_bits if holidays is None else np.asarray(holidays, dtype=bool)
    layout = slot_layout(config)
    first_target = seq.first_valid + required_history(config)
    if steps is None:
        steps = np.arange(first_target, seq.M)
    steps = np.asarray([s for s in steps if first_target <= s < seq.M], dtype=int)
    K, N = len(steps), len(layout)
    n, C = seq.matrices.shape[1], seq.matrices.shape[3]
    slots = np.empty((K, N, n, n, C))
    mask = np.ones((K, N), dtype=bool)
    for j, (offset, width) in enumerate(layout):
        centres = steps - offset
        if width == 1:
            slots[:, j] = seq.matrices[centres]
            covered = bits[centres]
        else:
            before, after = _smoothing_span(width)
            rel = np.arange(-before, after + 1)
            idx = centres[:, None] + rel[None, :]
            keep = idx <= steps[:, None]
            idx = np.where(keep, idx, centres[:, None])
            w = keep / keep.sum(axis=1, keepdims=True)
            slots[:, j] = np.einsum("kr,kr...->k...", w, seq.matrices[idx])
            covered = (bits[idx] & keep).any(axis=1)
        if use_mask and offset > 0:
            mask[:, j] = ~covered
    return ModelInputs(slots, mask, steps, tuple(o for o, _ in layout))


def residual_first_channel(x: np.ndarray, x_rec: np.ndarray) -> np.ndarray:
    """Channel-0 residual ``x[..., 0] - x_rec[..., 0]``."""
    x = np.asarray(x)
    x_rec = np.asarray(x_rec)
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    return x[..., 0] - x_rec[..., 0]


def save_mcm(seq: McmSequence, path: str | Path) -> Path:
    """Write ``<path>.npy`` plus a ``<path>.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path.with_suffix(".npy"), seq.matrices)
    sidecar = {
        "shape": list(seq.matrices.shape),
        "step": seq.step,
        "first_valid": seq.first_valid,
        "timestamps": [str(t) for t in seq.step_timestamps],
        "holiday_bits": [int(b) for b in seq.holiday_bits],
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar))
    return path


def load_mcm(path: str | Path) -> McmSequence:
    path = Path(path)
    matrices = np.load(path.with_suffix(".npy"))
    sidecar = json.loads(path.with_suffix(".json").read_text())
    if list(matrices.shape) != sidecar["shape"]:
        raise ValueError("MCM array does not match its sidecar")
    stamps = np.array(sidecar["timestamps"], dtype="datetime64[s]")
    return McmSequence(matrices, stamps, np.array(sidecar["holiday_bits"], dtype=bool),
                       sidecar["step"], sidecar["first_valid"])
