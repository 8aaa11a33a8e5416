"""Broken-tile anomaly scores and percentile-based thresholds."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

BETA_GRID = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0)
PERCENTILE = 99.6
METHODS = ("context_b", "context_h")


@dataclass
class ThresholdFit:
    eta996: float
    beta_b: float
    beta_h: float

    @property
    def theta_b(self) -> float:
        return self.beta_b * self.eta996

    @property
    def theta_h(self) -> float:
        return self.beta_h * self.eta996

    def theta(self, method: str) -> float:
        return {"context_b": self.theta_b, "context_h": self.theta_h}[method]

    def to_dict(self) -> dict:
        return asdict(self) | {"theta_b": self.theta_b, "theta_h": self.theta_h}


def broken_tiles(residual: np.ndarray, theta: float) -> np.ndarray:
    return np.abs(residual) > theta


def score_context_b(residual: np.ndarray, theta: float) -> np.ndarray | int:
    """Number of tiles with ``|R| > theta``; works on one matrix or a stack."""
    broken = broken_tiles(residual, theta)
    counts = broken.sum(axis=(-2, -1))
    return int(counts) if np.ndim(counts) == 0 else counts


def score_context_h(residual: np.ndarray, theta: float) -> np.ndarray | int:
    """Broken tiles lying in a row or column with more than ``n/2`` broken tiles.

    A tile in both a qualifying row and a qualifying column counts once.
    """
    broken = broken_tiles(residual, theta)
    n = broken.shape[-1]
    rows = broken.sum(axis=-1) > n / 2
    cols = broken.sum(axis=-2) > n / 2
    hot = rows[..., :, None] | cols[..., None, :]
    counts = (broken & hot).sum(axis=(-2, -1))
    return int(counts) if np.ndim(counts) == 0 else counts


SCORERS: dict[str, Callable] = {"context_b": score_context_b, "context_h": score_context_h}


def percentile_error(train_residuals: np.ndarray, q: float = PERCENTILE) -> float:
    residuals = np.asarray(train_residuals)
    if residuals.size == 0:
        raise ValueError("no training residuals")
    return float(np.percentile(np.abs(residuals), q))


def expand_steps(flags: np.ndarray, step: int) -> np.ndarray:
    """Repeat each step-level value over the ``step`` raw points it covers."""
    return np.repeat(np.asarray(flags), step)


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = np.sum(pred & truth)
    fp = np.sum(pred & ~truth)
    fn = np.sum(~pred & truth)
    return 0.0 if tp == 0 else float(2 * tp / (2 * tp + fp + fn))


def _pick(values: Sequence[float]) -> int:
    """Index of the best value; ties resolve to the middle of the tied run."""
    values = np.asarray(values)
    best = np.flatnonzero(values == values.max())
    return int(best[(len(best) - 1) // 2])


def sweep_beta(residuals: np.ndarray, truth: np.ndarray, eta: float, method: str, step: int,
               grid: Sequence[float] = BETA_GRID,
               objective: Callable[[np.ndarray, np.ndarray], float] = f1_score) -> list[float]:
    """Objective value of each grid multiplier on validation residuals."""
    scorer = SCORERS[method]
    out = []
    for beta in grid:
        pred = expand_steps(scorer(residuals, beta * eta) > 0, step)
        out.append(objective(pred, truth))
    return out


def fit_thresholds(train_residuals: np.ndarray, val_residuals: np.ndarray | None = None,
                   val_truth: np.ndarray | None = None, step: int = 5,
                   grid: Sequence[float] = BETA_GRID,
                   objective: Callable[[np.ndarray, np.ndarray], float] = f1_score) -> ThresholdFit:
    """Scale the 99.6th percentile of training errors by grid-searched multipliers.

    ``val_truth`` is the point-level label mask over the raw points covered by
    ``val_residuals`` (``len(val_residuals) * step`` points). ``beta_b`` and
    ``beta_h`` are chosen independently on validation F1, subject to
    ``theta_h <= theta_b``. Without validation anomalies both default to 1.
    """
    eta = percentile_error(train_residuals)
    grid = sorted(grid)
    if val_residuals is None or val_truth is None or not np.any(val_truth):
        log.warning("no validation anomalies; using beta = 1")
        return ThresholdFit(eta, 1.0, 1.0)
    val_truth = np.asarray(val_truth, dtype=bool)
    if len(val_truth) != len(val_residuals) * step:
        raise ValueError("validation truth must cover every raw point of the validation steps")
    beta_b = grid[_pick(sweep_beta(val_residuals, val_truth, eta, "context_b", step, grid, objective))]
    allowed = [b for b in grid if b <= beta_b]
    beta_h = allowed[_pick(sweep_beta(val_residuals, val_truth, eta, "context_h", step, allowed, objective))]
    return ThresholdFit(eta, beta_b, beta_h)


@dataclass
class ScoreTrace:
    method: str
    scores: np.ndarray
    step_index: np.ndarray
    timestamps: np.ndarray
    step: int

    @property
    def detections(self) -> np.ndarray:
        return self.scores > 0

    def point_detections(self) -> np.ndarray:
        return expand_steps(self.detections, self.step)

    def point_index(self) -> np.ndarray:
        """Raw point index of every entry of :meth:`point_detections`."""
        return (self.step_index[:, None] * self.step + np.arange(self.step)).ravel()

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("timestamp,step,score,detection\n")
            for ts, k, s in zip(self.timestamps, self.step_index, self.scores):
                fh.write(f"{ts},{k},{int(s)},{int(s > 0)}\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path, method: str, step: int) -> "ScoreTrace":
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
        data = np.atleast_1d(data)
        return cls(method, data["score"].astype(int), data["step"].astype(int),
                   data["timestamp"].astype("datetime64[s]"), step)


def score_trace(residuals: np.ndarray, fit: ThresholdFit, method: str, step_index: np.ndarray,
                timestamps: np.ndarray, step: int) -> ScoreTrace:
    scores = SCORERS[method](residuals, fit.theta(method))
    return ScoreTrace(method, np.atleast_1d(scores), np.asarray(step_index), np.asarray(timestamps), step)


def detect(scores: np.ndarray, step: int) -> np.ndarray:
    """Flag every raw point of each step whose score is positive."""
    return expand_steps(np.asarray(scores) > 0, step)


def write_summary(fit: ThresholdFit, path: str | Path, **extra) -> Path:
    path = Path(path)
    path.write_text(json.dumps(fit.to_dict() | extra, indent=2))
    return path
