"""End-to-end pipeline: featurize, train, score, localise and evaluate one dataset."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import detect as det
from .datagen import GeneratedDataset, Split, split_bounds
from .evalkit import STANDARD_PROFILE, EvalReport, NabProfile, evaluate, match_windows
from .mcm import McmConfig, McmSequence, ModelInputs, assemble_inputs, build_mcm, zscore
from .model import NetworkConfig, ReconstructionModel, reconstruct, train
from .rootcause import RootCauseReport, window_reports

log = logging.getLogger(__name__)


@dataclass
class Features:
    seq: McmSequence
    split: Split
    train: ModelInputs
    validation: ModelInputs
    test: ModelInputs


def region_steps(seq: McmSequence, lo: int, hi: int) -> np.ndarray:
    """Steps whose raw points all lie in ``[lo, hi)``."""
    k = np.arange(seq.M)
    p = seq.step
    return k[(k * p >= lo) & ((k + 1) * p <= hi)]


def featurize(dataset: GeneratedDataset, config: McmConfig, use_mask: bool = True) -> Features:
    """Z-score with training statistics, build MCMs and stack inputs per split."""
    frame = dataset.frame
    split = split_bounds(frame.T)
    normed = frame.copy()
    normed.values = zscore(frame.values, split.train_end)
    return features_from_mcm(build_mcm(normed, config), frame.T, config, use_mask)


def features_from_mcm(seq: McmSequence, T: int, config: McmConfig, use_mask: bool = True) -> Features:
    """Stack per-split inputs from an already built (possibly reloaded) MCM sequence."""
    split = split_bounds(T)
    parts = [assemble_inputs(seq, config, steps=region_steps(seq, *bounds), use_mask=use_mask)
             for bounds in (split.train, split.validation, split.test)]
    return Features(seq, split, *parts)


@dataclass
class Detection:
    fit: det.ThresholdFit
    traces: dict[str, det.ScoreTrace]
    test_residuals: np.ndarray
    val_residuals: np.ndarray
    train_residuals: np.ndarray


def point_truth(steps: np.ndarray, step: int, windows, T: int) -> np.ndarray:
    """Label mask over the raw points of ``steps``, in step order."""
    mask = np.zeros(T, dtype=bool)
    for s, e in windows:
        mask[s:e] = True
    idx = (steps[:, None] * step + np.arange(step)).ravel()
    return mask[idx]


def run_detection(model: ReconstructionModel, features: Features, dataset: GeneratedDataset,
                  grid=det.BETA_GRID) -> Detection:
    p = features.seq.step
    T = dataset.frame.T
    _, r_train = reconstruct(features.train, model)
    _, r_val = reconstruct(features.validation, model)
    _, r_test = reconstruct(features.test, model)
    windows = [(a.start, a.end) for a in dataset.labels]
    val_truth = point_truth(features.validation.step_index, p, windows, T)
    fit = det.fit_thresholds(r_train, r_val, val_truth, step=p, grid=grid)
    stamps = features.seq.step_timestamps[features.test.step_index]
    traces = {m: det.score_trace(r_test, fit, m, features.test.step_index, stamps, p) for m in det.METHODS}
    return Detection(fit, traces, r_test, r_val, r_train)


@dataclass
class RunResult:
    model: ReconstructionModel
    features: Features
    detection: Detection
    reports: dict[str, EvalReport]
    root_causes: list[RootCauseReport] = field(default_factory=list)


def evaluate_trace(trace: det.ScoreTrace, dataset: GeneratedDataset,
                   root_causes: list[RootCauseReport] = (),
                   profile: NabProfile = STANDARD_PROFILE) -> EvalReport:
    """Metrics over the contiguous raw range covered by the trace's steps."""
    lo = int(trace.step_index[0]) * trace.step
    pred = trace.point_detections()
    windows = [(a.start, a.end) for a in dataset.labels]
    pairs = []
    if root_causes:
        labels = dataset.labels
        detected = [(r.window[0] * trace.step, r.window[1] * trace.step) for r in root_causes]
        for i, j in match_windows(detected, [(a.start, a.end) for a in labels]):
            pairs.append((root_causes[i].selected, labels[j].root_causes))
    return evaluate(pred, windows, offset=lo, rc_pairs=pairs, profile=profile)


def run(dataset: GeneratedDataset, mcm_config: McmConfig, net_config: NetworkConfig,
        scoring: str = "context_h", rootcause_method: str = "AE", use_mask: bool = True,
        grid=det.BETA_GRID, progress: bool = False) -> RunResult:
    features = featurize(dataset, mcm_config, use_mask=use_mask)
    model = train(features.train, net_config, progress=progress)
    detection = run_detection(model, features, dataset, grid)
    trace = detection.traces[scoring]
    root_causes = window_reports(detection.test_residuals, trace.detections, trace.step_index,
                                 rootcause_method, detection.fit.theta_b)
    reports = {}
    for method, tr in detection.traces.items():
        rc = root_causes if method == scoring else []
        reports[method] = evaluate_trace(tr, dataset, rc)
    return RunResult(model, features, detection, reports, root_causes)
