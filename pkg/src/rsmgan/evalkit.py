"""Point-wise detection metrics, NAB-style scoring and root-cause recall."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class NabProfile:
    """Weights of the standard application profile, as positive magnitudes.

    True positives earn ``+tp``, false positives cost ``fp`` and missed
    windows cost ``fn``.
    """

    tp: float = 1.0
    fp: float = 0.11
    fn: float = 1.0


STANDARD_PROFILE = NabProfile()


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    fpr: float
    nab_score: float
    root_cause_recall: float | None
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


Window = tuple[int, int]


def windows_to_mask(windows: Iterable[Window], length: int, offset: int = 0) -> np.ndarray:
    """Boolean mask over ``[offset, offset + length)`` for end-exclusive windows."""
    mask = np.zeros(length, dtype=bool)
    for start, end in windows:
        lo, hi = max(start - offset, 0), min(end - offset, length)
        if hi > lo:
            mask[lo:hi] = True
    return mask


def confusion(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError("detections and labels must be aligned")
    if pred.size == 0:
        raise ValueError("empty evaluation range")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def point_metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float, float]:
    """``(precision, recall, f1, fpr)`` counted point by point; undefined ratios are 0."""
    tp, fp, fn, tn = confusion(pred, truth)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return precision, recall, f1, fpr


def scaled_sigmoid(position: float) -> float:
    """``2 / (1 + exp(5 y)) - 1``: about +1 at the window start (y = -1), 0 at its end, -1 far past it."""
    if position > 3.0:
        return -1.0
    return 2.0 / (1.0 + math.exp(5.0 * position)) - 1.0


def _check_windows(windows: Sequence[Window]) -> list[Window]:
    windows = sorted((int(s), int(e)) for s, e in windows)
    for (s0, e0), (s1, e1) in zip(windows, windows[1:]):
        if s1 < e0:
            raise ValueError("label windows overlap")
    if any(e <= s for s, e in windows):
        raise ValueError("empty label window")
    return windows


def raw_nab(pred: np.ndarray, windows: Sequence[Window], profile: NabProfile = STANDARD_PROFILE,
            offset: int = 0) -> float:
    """Unnormalised score for point detections ``pred`` covering ``[offset, offset + len(pred))``.

    Only the first detection in a window is credited, by its relative
    position ``y = -(end - i) / width``. A detection after a window is
    charged ``fp * sigmoid((i - last) / width)`` relative to the preceding
    window; one before any window costs the full ``fp``. Missed windows cost
    ``fn`` each.
    """
    windows = _check_windows(windows)
    hits = np.flatnonzero(np.asarray(pred, dtype=bool)) + offset
    score = 0.0
    credited = set()
    for i in hits:
        inside = next((w for w in windows if w[0] <= i < w[1]), None)
        if inside is not None:
            if inside not in credited:
                credited.add(inside)
                width = inside[1] - inside[0]
                score += profile.tp * scaled_sigmoid(-(inside[1] - i) / width)
            continue
        before = [w for w in windows if w[1] <= i]
        if before:
            start, end = before[-1]
            score += profile.fp * scaled_sigmoid((i - (end - 1)) / (end - start))
        else:
            score -= profile.fp
    score -= profile.fn * (len(windows) - len(credited))
    return score


def nab_score(pred: np.ndarray, windows: Sequence[Window], profile: NabProfile = STANDARD_PROFILE,
              offset: int = 0) -> float:
    """Raw score divided by that of a detector firing on the first point of every window."""
    windows = _check_windows(windows)
    if not windows:
        return 0.0
    perfect = profile.tp * scaled_sigmoid(-1.0) * len(windows)
    return raw_nab(pred, windows, profile, offset) / perfect


def root_cause_recall(pairs: Iterable[tuple[Iterable[int], Iterable[int]]]) -> float | None:
    """Mean of ``|predicted & true| / |true|`` over ``(predicted, true)`` pairs; ``None`` if empty."""
    ratios = []
    for predicted, true in pairs:
        true = set(true)
        ratios.append(len(set(predicted) & true) / len(true))
    return float(np.mean(ratios)) if ratios else None


def match_windows(detected: Sequence[Window], labels: Sequence[Window]) -> list[tuple[int, int]]:
    """Pair each detected window with the label window it overlaps most, as index pairs."""
    pairs = []
    for i, (ds, de) in enumerate(detected):
        overlaps = [max(0, min(de, le) - max(ds, ls)) for ls, le in labels]
        if overlaps and max(overlaps) > 0:
            pairs.append((i, int(np.argmax(overlaps))))
    return pairs


def evaluate(pred: np.ndarray, windows: Sequence[Window], offset: int = 0,
             rc_pairs: Iterable[tuple[Iterable[int], Iterable[int]]] = (),
             profile: NabProfile = STANDARD_PROFILE) -> EvalReport:
    """Full report for point detections over ``[offset, offset + len(pred))``."""
    pred = np.asarray(pred, dtype=bool)
    truth = windows_to_mask(windows, len(pred), offset)
    tp, fp, fn, tn = confusion(pred, truth)
    precision, recall, f1, fpr = point_metrics(pred, truth)
    inside = [w for w in windows if w[0] < offset + len(pred) and w[1] > offset]
    clipped = [(max(s, offset), min(e, offset + len(pred))) for s, e in inside]
    return EvalReport(precision, recall, f1, fpr, nab_score(pred, clipped, profile, offset),
                      root_cause_recall(rc_pairs), tp, fp, fn, tn)


def mean_report(reports: Sequence[EvalReport]) -> dict:
    out = {}
    for key in ("precision", "recall", "f1", "fpr", "nab_score", "root_cause_recall", "tp", "fp", "fn", "tn"):
        values = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        out[key] = float(np.mean(values)) if values else None
    return out
