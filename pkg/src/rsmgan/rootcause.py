"""Per-series severity scores and elbow selection of the root-cause set."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ElbowResult:
    k: int
    selected: list[int]
    elbow_index: int
    distinguished: bool = True


@dataclass
class RootCauseReport:
    window: tuple[int, int]  # (start, end) steps, end exclusive
    scores: np.ndarray
    method: str
    selected: list[int]
    elbow_index: int
    distinguished: bool = True
    residual: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "method": self.method,
            "scores": [float(s) for s in self.scores],
            "selected": [int(i) for i in self.selected],
            "elbow_index": int(self.elbow_index),
            "distinguished": self.distinguished,
        }


def average_residual(residuals: np.ndarray) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim == 2:
        return residuals
    if residuals.shape[0] == 0:
        raise ValueError("empty window")
    return residuals.mean(axis=0)


def score_series(residuals: np.ndarray, method: str = "AE", theta_b: float | None = None) -> np.ndarray:
    """Score each series from the union of its row and column of the averaged residual.

    ``NB`` counts broken tiles (``|R| > theta_b``); ``AE`` sums absolute
    errors. The series' own diagonal tile counts once.
    """
    R = np.abs(average_residual(residuals))
    method = method.upper()
    if method == "NB":
        if theta_b is None:
            raise ValueError("NB scoring needs theta_b")
        R = (R > theta_b).astype(float)
    elif method != "AE":
        raise ValueError(f"unknown method {method!r}")
    return R.sum(axis=1) + R.sum(axis=0) - np.diag(R)


def elbow_distances(sorted_scores: np.ndarray) -> np.ndarray:
    """Distance of each point of a descending curve to the chord joining its ends.

    Both axes are min-max normalised first, so the chord runs from (0, 1) to
    (1, 0) and the distance is ``|x + y - 1| / sqrt(2)``.
    """
    s = np.asarray(sorted_scores, dtype=float)
    n = len(s)
    x = np.arange(n) / (n - 1)
    span = s[0] - s[-1]
    y = (s - s[-1]) / span
    return np.abs(x + y - 1) / np.sqrt(2)


def select_elbow(scores) -> ElbowResult:
    """Select series scoring strictly above the elbow of the descending score curve.

    The elbow is the point farthest from the chord through the first and last
    sorted scores; ties go to the highest-scoring point. Flat or straight
    curves have no elbow and select nothing.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or len(scores) < 2:
        raise ValueError("need at least two scores")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    if s[0] == s[-1]:
        return ElbowResult(0, [], 0, distinguished=False)
    d = elbow_distances(s)
    elbow = int(np.argmax(d))
    if d[elbow] == 0:
        return ElbowResult(0, [], 0, distinguished=False)
    selected = [int(i) for i in order if scores[i] > s[elbow]]
    return ElbowResult(len(selected), selected, elbow)


def infer_root_causes(residuals: np.ndarray, window: tuple[int, int], method: str = "AE",
                      theta_b: float | None = None) -> RootCauseReport:
    avg = average_residual(residuals)
    scores = score_series(avg, method, theta_b)
    elbow = select_elbow(scores)
    return RootCauseReport((int(window[0]), int(window[1])), scores, method.upper(), elbow.selected,
                           elbow.elbow_index, elbow.distinguished, avg)


def detected_windows(flags: np.ndarray, step_index: np.ndarray, max_gap: int = 1) -> list[tuple[int, int]]:
    """Group detected steps into ``(start, end)`` runs, bridging gaps of up to ``max_gap`` steps."""
    steps = np.asarray(step_index)[np.asarray(flags, dtype=bool)]
    runs: list[list[int]] = []
    for k in steps:
        if runs and k - runs[-1][1] <= max_gap:
            runs[-1][1] = k + 1
        else:
            runs.append([int(k), int(k) + 1])
    return [tuple(r) for r in runs]


def window_reports(residuals: np.ndarray, flags: np.ndarray, step_index: np.ndarray,
                   method: str = "AE", theta_b: float | None = None,
                   max_gap: int = 1) -> list[RootCauseReport]:
    """One report per detected window, from the residuals averaged over that window."""
    step_index = np.asarray(step_index)
    reports = []
    for lo, hi in detected_windows(flags, step_index, max_gap):
        rows = (step_index >= lo) & (step_index < hi)
        reports.append(infer_root_causes(residuals[rows], (lo, hi), method, theta_b))
    return reports


def write_reports(reports: list[RootCauseReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    return path


def read_reports(path: str | Path) -> list[RootCauseReport]:
    items = json.loads(Path(path).read_text())
    return [RootCauseReport(tuple(d["window"]), np.array(d["scores"]), d["method"], d["selected"],
                            d["elbow_index"], d.get("distinguished", True)) for d in items]
