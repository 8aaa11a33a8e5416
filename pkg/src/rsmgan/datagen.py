"""Synthetic seasonal multivariate series with injected anomalies and holidays.

Every series is a sum of noisy sinusoids, one per requested seasonal
pattern. Anomalies are level shocks applied to a random subset of series
(the root causes) over a short window; holidays are multiplicative surges
applied to every series.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

MINUTES_PER_DAY = 60 * 24
HOURS_PER_DAY = 24

# Angular frequencies (radians per step) for minute-sampled data.
F_DAY = 2 * math.pi / (60 * 24)
F_WEEK = 2 * math.pi / (60 * 24 * 7)

RANDOM_PERIOD_RANGE = (60.0, 100.0)
PHASE_SHIFT_RANGE = (10, 100)
DURATION_RANGE = (5, 60)
ROOT_CAUSE_RANGE = (2, 6)
MAGNITUDE_RANGE = (1.5, 4.0)
HOLIDAY_SURGE = 3.0


class SeasonKind(str, Enum):
    RANDOM = "random"
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"


class Direction(str, Enum):
    SPIKE = "spike"
    DIP = "dip"


def seasonal_frequency(kind: SeasonKind | str, steps_per_day: int = MINUTES_PER_DAY) -> float:
    """Angular frequency of a calendar seasonality at the given sampling rate.

    With minute data, ``seasonal_frequency("daily") == F_DAY``. Monthly
    seasonality uses a 30-day month.
    """
    kind = SeasonKind(kind)
    days = {SeasonKind.DAILY: 1, SeasonKind.WEEKLY: 7, SeasonKind.MONTHLY: 30}
    if kind not in days:
        raise ValueError(f"{kind.value!r} seasonality has no calendar frequency")
    return 2 * math.pi / (steps_per_day * days[kind])


@dataclass(frozen=True)
class SeasonSpec:
    """One sinusoidal component ``wave((t - phase_shift) / period) + noise``.

    ``period`` divides the time argument, so the wave repeats every
    ``2 * pi * period`` steps. ``waveform`` 0 selects sine and 1 cosine.
    """

    kind: SeasonKind
    period: float
    phase_shift: int = 0
    waveform: int = 0
    noise_scale: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "kind", SeasonKind(self.kind))
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.phase_shift < 0:
            raise ValueError("phase_shift must be non-negative")
        if self.waveform not in (0, 1):
            raise ValueError("waveform must be 0 (sin) or 1 (cos)")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")


@dataclass(frozen=True)
class AnomalySpec:
    start: int
    duration: int
    direction: Direction
    root_causes: tuple[int, ...]
    magnitude: float

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "root_causes", tuple(sorted(int(i) for i in self.root_causes)))
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not self.root_causes:
            raise ValueError("an anomaly needs at least one root cause")
        if self.magnitude <= 0:
            raise ValueError("magnitude must be positive")

    @property
    def end(self) -> int:
        """Exclusive end index."""
        return self.start + self.duration

    def overlaps(self, other: "AnomalySpec") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass
class SeriesFrame:
    """An ``n x T`` multivariate series with timestamps and a holiday calendar."""

    values: np.ndarray
    timestamps: np.ndarray
    names: list[str]
    holidays: np.ndarray = field(default=None)  # boolean, length T

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-D (n, T)")
        n, T = self.values.shape
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if self.timestamps.shape != (T,):
            raise ValueError("need one timestamp per column")
        if len(self.names) != n:
            raise ValueError("need one name per series")
        if self.holidays is None:
            self.holidays = np.zeros(T, dtype=bool)
        self.holidays = np.asarray(self.holidays, dtype=bool)
        if self.holidays.shape != (T,):
            raise ValueError("holiday mask must have length T")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "SeriesFrame":
        return SeriesFrame(self.values.copy(), self.timestamps.copy(), list(self.names),
                           self.holidays.copy())


@dataclass
class GeneratedDataset:
    frame: SeriesFrame
    train_labels: list[AnomalySpec]
    test_labels: list[AnomalySpec]
    holiday_steps: set[int]

    @property
    def labels(self) -> list[AnomalySpec]:
        return sorted(self.train_labels + self.test_labels, key=lambda a: a.start)


@dataclass(frozen=True)
class Split:
    """Index boundaries of the train / validation / test regions (end-exclusive)."""

    train_end: int
    val_end: int
    T: int

    @property
    def train(self) -> tuple[int, int]:
        return 0, self.train_end

    @property
    def validation(self) -> tuple[int, int]:
        return self.train_end, self.val_end

    @property
    def test(self) -> tuple[int, int]:
        return self.val_end, self.T


def split_bounds(T: int) -> Split:
    """First half trains; the rest is cut 1:4 into validation and test."""
    train_end = T // 2
    return Split(train_end, train_end + (T - train_end) // 5, T)


def wave_value(t, spec: SeasonSpec):
    """Noise-free part of a component at (possibly fractional) times ``t``."""
    wave = np.cos if spec.waveform else np.sin
    return wave((np.asarray(t, dtype=float) - spec.phase_shift) / spec.period)


def generate_component(T: int, spec: SeasonSpec, seed: int | np.random.SeedSequence) -> np.ndarray:
    if T <= 0:
        raise ValueError("T must be positive")
    values = wave_value(np.arange(T), spec)
    if spec.noise_scale:
        values = values + spec.noise_scale * np.random.default_rng(seed).standard_normal(T)
    return values


def sample_season_spec(kind: SeasonKind | str, rng: np.random.Generator,
                       steps_per_day: int = MINUTES_PER_DAY,
                       noise_scale: float = 0.3) -> SeasonSpec:
    kind = SeasonKind(kind)
    if kind is SeasonKind.RANDOM:
        period = rng.uniform(*RANDOM_PERIOD_RANGE)
    else:
        period = 1.0 / seasonal_frequency(kind, steps_per_day)
    return SeasonSpec(
        kind=kind,
        period=float(period),
        phase_shift=int(rng.integers(PHASE_SHIFT_RANGE[0], PHASE_SHIFT_RANGE[1] + 1)),
        waveform=int(rng.integers(0, 2)),
        noise_scale=noise_scale,
    )


def component_plan(n: int, patterns: Sequence[SeasonKind | str], seed: int,
                   steps_per_day: int = MINUTES_PER_DAY,
                   noise_scale: float = 0.3) -> list[list[tuple[SeasonSpec, np.random.SeedSequence]]]:
    """Per-series list of ``(spec, noise_seed)`` pairs used by :func:`generate_mts`."""
    if n < 1:
        raise ValueError("need at least one series")
    kinds = [SeasonKind(k) for k in patterns]
    if not kinds:
        raise ValueError("need at least one seasonal pattern")
    plan = []
    for i, series_seq in enumerate(np.random.SeedSequence(seed).spawn(n)):
        row = []
        for kind, comp_seq in zip(kinds, series_seq.spawn(len(kinds))):
            spec_seq, noise_seq = comp_seq.spawn(2)
            spec = sample_season_spec(kind, np.random.default_rng(spec_seq), steps_per_day, noise_scale)
            row.append((spec, noise_seq))
        plan.append(row)
    return plan


def make_timestamps(T: int, steps_per_day: int = MINUTES_PER_DAY,
                    start: str = "2020-01-01T00:00:00") -> np.ndarray:
    step = np.timedelta64(MINUTES_PER_DAY * 60 // steps_per_day, "s")
    return np.datetime64(start, "s") + step * np.arange(T)


def generate_mts(n: int, T: int, patterns: Sequence[SeasonKind | str], seed: int,
                 steps_per_day: int = MINUTES_PER_DAY, noise_scale: float = 0.3) -> SeriesFrame:
    """Sum one independently sampled component per pattern for each of ``n`` series.

    Each component draws its own phase shift, waveform and (for ``random``)
    period; noise is resampled per series and per component.
    """
    plan = component_plan(n, patterns, seed, steps_per_day, noise_scale)
    values = np.zeros((n, T))
    for i, row in enumerate(plan):
        for spec, noise_seed in row:
            values[i] += generate_component(T, spec, noise_seed)
    return SeriesFrame(values, make_timestamps(T, steps_per_day),
                       [f"series_{i}" for i in range(n)])


def _region(split: str, T: int) -> list[tuple[int, int]]:
    bounds = split_bounds(T)
    if split == "train":
        return [bounds.train]
    if split == "test":
        # validation and test both receive test anomalies; no window may straddle them
        return [bounds.validation, bounds.test]
    raise ValueError(f"unknown split {split!r}")


def inject_anomalies(frame: SeriesFrame, count: int, split: str, seed: int,
                     existing: Iterable[AnomalySpec] = (),
                     max_tries: int = 10_000) -> tuple[SeriesFrame, list[AnomalySpec]]:
    """Shock ``count`` random windows of the chosen split.

    Each anomaly adds a constant offset of ``magnitude`` training standard
    deviations (sign given by the direction) to its root-cause series only.
    Windows never overlap each other or anything in ``existing``.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    out = frame.copy()
    if count == 0:
        return out, []
    regions = [(lo, hi) for lo, hi in _region(split, frame.T) if hi - lo >= DURATION_RANGE[0]]
    if not regions:
        raise ValueError("split is too short for any anomaly")
    weights = np.array([hi - lo for lo, hi in regions], dtype=float)
    train_std = frame.values[:, : split_bounds(frame.T).train_end].std(axis=1)
    train_std[train_std == 0] = 1.0
    rng = np.random.default_rng(seed)
    n = frame.n
    placed = list(existing)
    labels: list[AnomalySpec] = []
    tries = 0
    while len(labels) < count:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could not place {count} non-overlapping anomalies in the {split} split")
        lo, hi = regions[rng.choice(len(regions), p=weights / weights.sum())]
        duration = int(rng.integers(DURATION_RANGE[0], DURATION_RANGE[1] + 1))
        if duration > hi - lo:
            continue
        start = int(rng.integers(lo, hi - duration + 1))
        k = int(rng.integers(ROOT_CAUSE_RANGE[0], min(ROOT_CAUSE_RANGE[1], n) + 1)) if n >= 2 else 1
        candidate = AnomalySpec(
            start=start,
            duration=duration,
            direction=Direction.SPIKE if rng.integers(0, 2) else Direction.DIP,
            root_causes=tuple(rng.choice(n, size=min(k, n), replace=False)),
            magnitude=float(rng.uniform(*MAGNITUDE_RANGE)),
        )
        if any(candidate.overlaps(other) for other in placed):
            continue
        placed.append(candidate)
        labels.append(candidate)
    for a in labels:
        sign = 1.0 if a.direction is Direction.SPIKE else -1.0
        idx = list(a.root_causes)
        out.values[idx, a.start:a.end] += sign * a.magnitude * train_std[idx, None]
    labels.sort(key=lambda a: a.start)
    return out, labels


def inject_holidays(frame: SeriesFrame, holiday_steps: Iterable[int], seed: int | None = None) -> SeriesFrame:
    """Multiply every series by ``HOLIDAY_SURGE`` at the holiday steps.

    The pattern is deterministic; ``seed`` is accepted for signature parity
    with the other injectors and does not affect the result.
    """
    steps = np.fromiter((int(s) for s in holiday_steps), dtype=int)
    if steps.size and (steps.min() < 0 or steps.max() >= frame.T):
        raise ValueError("holiday step out of range")
    out = frame.copy()
    if steps.size:
        out.values[:, steps] *= HOLIDAY_SURGE
        out.holidays[steps] = True
    return out


def sample_holidays(T: int, steps_per_day: int, count: int, seed: int,
                    min_gap_days: int = 3) -> set[int]:
    """Whole-day holidays spread over both halves of the series."""
    days = T // steps_per_day
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    halves = [(1, days // 2), (days // 2 + 1, days)]
    per_half = [count - count // 2, count // 2]
    for (lo, hi), want in zip(halves, per_half):
        candidates = list(range(lo, hi))
        rng.shuffle(candidates)
        picked = 0
        for d in candidates:
            if picked == want:
                break
            if all(abs(d - c) >= min_gap_days for c in chosen):
                chosen.append(d)
                picked += 1
    steps: set[int] = set()
    for d in chosen:
        steps.update(range(d * steps_per_day, min((d + 1) * steps_per_day, T)))
    return steps


@dataclass
class DatasetSpec:
    """Everything needed to regenerate a synthetic dataset."""

    n: int = 10
    T: int = 10_080
    patterns: tuple[str, ...] = ("random",)
    steps_per_day: int = MINUTES_PER_DAY
    noise_scale: float = 0.3
    train_anomalies: int = 0
    test_anomalies: int = 10
    holidays: int = 0
    seed: int = 0


def generate_dataset(spec: DatasetSpec) -> GeneratedDataset:
    seeds = np.random.SeedSequence(spec.seed).generate_state(4)
    frame = generate_mts(spec.n, spec.T, spec.patterns, int(seeds[0]),
                         spec.steps_per_day, spec.noise_scale)
    holiday_steps: set[int] = set()
    if spec.holidays:
        holiday_steps = sample_holidays(spec.T, spec.steps_per_day, spec.holidays, int(seeds[1]))
        frame = inject_holidays(frame, holiday_steps)
    frame, train_labels = inject_anomalies(frame, spec.train_anomalies, "train", int(seeds[2]))
    frame, test_labels = inject_anomalies(frame, spec.test_anomalies, "test", int(seeds[3]),
                                          existing=train_labels)
    return GeneratedDataset(frame, train_labels, test_labels, holiday_steps)


def labels_to_mask(labels: Iterable[AnomalySpec], T: int) -> np.ndarray:
    mask = np.zeros(T, dtype=bool)
    for a in labels:
        mask[a.start:a.end] = True
    return mask


# -- persistence -------------------------------------------------------------

def write_dataset(dataset: GeneratedDataset, directory: str | Path) -> Path:
    """Write ``series.csv``, ``labels.json`` and ``holidays.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = dataset.frame
    df = pd.DataFrame(frame.values.T, columns=frame.names)
    df.insert(0, "timestamp", pd.to_datetime(frame.timestamps).strftime("%Y-%m-%dT%H:%M:%S"))
    df.to_csv(directory / "series.csv", index=False, float_format="%.17g")
    labels = [
        {"start": a.start, "end": a.end, "root_causes": list(a.root_causes), "split": split,
         "direction": a.direction.value, "magnitude": a.magnitude}
        for split, group in (("train", dataset.train_labels), ("test", dataset.test_labels))
        for a in group
    ]
    (directory / "labels.json").write_text(json.dumps(labels, indent=2))
    stamps = [str(frame.timestamps[s]) for s in sorted(dataset.holiday_steps)]
    (directory / "holidays.json").write_text(json.dumps(stamps, indent=2))
    return directory


def read_dataset(directory: str | Path) -> GeneratedDataset:
    directory = Path(directory)
    df = pd.read_csv(directory / "series.csv", float_precision="round_trip")
    timestamps = pd.to_datetime(df.pop("timestamp")).to_numpy().astype("datetime64[s]")
    frame = SeriesFrame(df.to_numpy().T, timestamps, list(df.columns))
    train, test = [], []
    labels_path = directory / "labels.json"
    for item in json.loads(labels_path.read_text()) if labels_path.exists() else []:
        spec = AnomalySpec(
            start=item["start"],
            duration=item["end"] - item["start"],
            direction=item.get("direction", "spike"),
            root_causes=tuple(item["root_causes"]),
            magnitude=item.get("magnitude", 1.0),
        )
        (train if item["split"] == "train" else test).append(spec)
    holiday_steps: set[int] = set()
    holidays_path = directory / "holidays.json"
    if holidays_path.exists():
        lookup = {ts: i for i, ts in enumerate(timestamps.astype("datetime64[s]"))}
        for stamp in json.loads(holidays_path.read_text()):
            holiday_steps.add(lookup[np.datetime64(stamp, "s")])
    frame.holidays[list(holiday_steps)] = True
    return GeneratedDataset(frame, train, test, holiday_steps)


def with_values(frame: SeriesFrame, values: np.ndarray) -> SeriesFrame:
    return replace(frame, values=np.asarray(values, dtype=float))
