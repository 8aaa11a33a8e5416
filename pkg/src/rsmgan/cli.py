"""Config-driven experiment runner.

One YAML file describes an experiment: a dataset spec (or a directory holding
``series.csv``/``labels.json``), MCM and network settings, the threshold grid,
scoring and root-cause methods, seeds and an output directory. Every stage
persists its artifacts under ``<output>/<child>/seed_<s>/`` so each verb can
resume from the previous stage::

    rsmgan run-all -c experiment.yaml
    rsmgan train -c experiment.yaml --seed 3
    rsmgan plot -c experiment.yaml

A ``sweep`` mapping of dotted keys to lists expands into one child run per
combination, e.g. ``{dataset.train_anomalies: [0, 5, 10, 15]}``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import logging
import os
import platform
import sys
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import detect as det
from .datagen import DatasetSpec, GeneratedDataset, generate_dataset, read_dataset, write_dataset
from .evalkit import EvalReport, NabProfile, mean_report
from .mcm import McmConfig, load_mcm, save_mcm
from .model import NetworkConfig, load_checkpoint, save_checkpoint, train
from .pipeline import evaluate_trace, featurize, features_from_mcm, run_detection
from .plots import emit_plots
from .rootcause import read_reports, window_reports, write_reports

log = logging.getLogger("rsmgan")

DEVICE_ENV = "RSMGAN_DEVICE"
DESK_NETWORK = {"epochs": 50, "conv_channels": [16, 32, 64, 128], "critic_channels": [16, 32, 64]}
FULL_NETWORK = {"epochs": 300, "conv_channels": [32, 64, 128, 256], "critic_channels": [32, 64, 128]}
STAGES = ("generate", "featurize", "train", "detect", "rootcause", "evaluate", "plot")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    output: str = "runs/experiment"
    seeds: list[int] = field(default_factory=lambda: [0])
    dataset: dict = field(default_factory=dict)
    mcm: dict = field(default_factory=dict)
    network: dict = field(default_factory=lambda: dict(DESK_NETWORK))
    grid: list[float] = field(default_factory=lambda: list(det.BETA_GRID))
    scoring: str = "context_h"
    rootcause: str = "AE"
    use_mask: bool = True
    nab_profile: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.scoring not in det.METHODS:
            raise ValueError(f"scoring must be one of {det.METHODS}")
        if self.rootcause.upper() not in ("AE", "NB"):
            raise ValueError("rootcause must be AE or NB")
        path = self.dataset.get("path")
        if path is not None and not (Path(path) / "series.csv").exists():
            raise FileNotFoundError(f"no series.csv under {path}")
        # fail early on unknown or invalid fields
        self.dataset_spec(self.seeds[0])
        self.mcm_config()
        self.network_config(self.seeds[0])
        self.profile()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        data["network"] = {**DESK_NETWORK, **(data.get("network") or {})}
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def dataset_spec(self, seed: int) -> DatasetSpec | None:
        if "path" in self.dataset:
            return None
        spec = {**self.dataset, "seed": seed}
        if "patterns" in spec:
            spec["patterns"] = tuple(spec["patterns"])
        return DatasetSpec(**spec)

    def profile(self) -> NabProfile:
        return NabProfile(**self.nab_profile)

    def mcm_config(self) -> McmConfig:
        return McmConfig(**self.mcm)

    def network_config(self, seed: int) -> NetworkConfig:
        params = {**self.network, "seed": seed}
        device = os.environ.get(DEVICE_ENV)
        if device:
            params["device"] = device
        return NetworkConfig(**params)


def load_config(path: str | Path) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text()) or {}
    return ExperimentConfig.from_dict(data)


def _set_dotted(data: dict, key: str, value) -> None:
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = value


def expand_sweep(config: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Cartesian product of the sweep lists, one labelled child config per combination."""
    if not config.sweep:
        return [("", config)]
    keys = sorted(config.sweep)
    children = []
    for combo in itertools.product(*(config.sweep[k] for k in keys)):
        data = copy.deepcopy(config.to_dict())
        data["sweep"] = {}
        for k, v in zip(keys, combo):
            _set_dotted(data, k, v)
        label = ",".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, combo))
        children.append((label, ExperimentConfig.from_dict(data)))
    return children


@dataclass
class RunContext:
    config: ExperimentConfig
    seed: int
    directory: Path

    @property
    def dataset_dir(self) -> Path:
        return self.directory / "dataset"

    def dataset(self) -> GeneratedDataset:
        return read_dataset(self.dataset_dir)


def run_contexts(config: ExperimentConfig, output: Path) -> list[tuple[str, list[RunContext]]]:
    out = []
    for label, child in expand_sweep(config):
        base = output / label if label else output
        out.append((label, [RunContext(child, s, base / f"seed_{s}") for s in child.seeds]))
    return out


# -- stages ------------------------------------------------------------------

def stage_generate(ctx: RunContext) -> None:
    spec = ctx.config.dataset_spec(ctx.seed)
    if spec is None:
        dataset = read_dataset(ctx.config.dataset["path"])
    else:
        dataset = generate_dataset(spec)
    write_dataset(dataset, ctx.dataset_dir)


def stage_featurize(ctx: RunContext) -> None:
    features = featurize(ctx.dataset(), ctx.config.mcm_config(), ctx.config.use_mask)
    save_mcm(features.seq, ctx.directory / "features" / "mcm")


def _features(ctx: RunContext, dataset: GeneratedDataset):
    seq = load_mcm(ctx.directory / "features" / "mcm")
    return features_from_mcm(seq, dataset.frame.T, ctx.config.mcm_config(), ctx.config.use_mask)


def stage_train(ctx: RunContext) -> None:
    features = _features(ctx, ctx.dataset())
    model = train(features.train, ctx.config.network_config(ctx.seed))
    save_checkpoint(model, ctx.directory / "checkpoint")


def stage_detect(ctx: RunContext) -> None:
    dataset = ctx.dataset()
    features = _features(ctx, dataset)
    model = load_checkpoint(ctx.directory / "checkpoint", os.environ.get(DEVICE_ENV))
    detection = run_detection(model, features, dataset, tuple(ctx.config.grid))
    out = ctx.directory / "detection"
    out.mkdir(parents=True, exist_ok=True)
    det.write_summary(detection.fit, out / "thresholds.json")
    for method, trace in detection.traces.items():
        trace.to_csv(out / f"trace_{method}.csv")
    np.savez(out / "residuals.npz", test=detection.test_residuals, validation=detection.val_residuals,
             train=detection.train_residuals, test_steps=features.test.step_index)


def _load_fit(directory: Path) -> det.ThresholdFit:
    data = json.loads((directory / "thresholds.json").read_text())
    return det.ThresholdFit(data["eta996"], data["beta_b"], data["beta_h"])


def load_traces(directory: Path, step: int) -> dict[str, det.ScoreTrace]:
    traces = {}
    for method in det.METHODS:
        path = directory / f"trace_{method}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing score trace {path}")
        traces[method] = det.ScoreTrace.from_csv(path, method, step)
    return traces


def stage_rootcause(ctx: RunContext) -> None:
    out = ctx.directory / "detection"
    step = ctx.config.mcm_config().step
    trace = load_traces(out, step)[ctx.config.scoring]
    residuals = np.load(out / "residuals.npz")["test"]
    fit = _load_fit(out)
    reports = window_reports(residuals, trace.detections, trace.step_index, ctx.config.rootcause,
                             fit.theta_b)
    write_reports(reports, ctx.directory / "rootcause.json")


def stage_evaluate(ctx: RunContext) -> dict[str, EvalReport]:
    dataset = ctx.dataset()
    step = ctx.config.mcm_config().step
    traces = load_traces(ctx.directory / "detection", step)
    rc_path = ctx.directory / "rootcause.json"
    rc = read_reports(rc_path) if rc_path.exists() else []
    reports = {}
    for method, trace in traces.items():
        report = evaluate_trace(trace, dataset, rc if method == ctx.config.scoring else [],
                                ctx.config.profile())
        report.to_json(ctx.directory / "reports" / f"{method}.json")
        reports[method] = report
    return reports


def stage_plot(ctx: RunContext) -> list[Path]:
    dataset = ctx.dataset()
    traces = load_traces(ctx.directory / "detection", ctx.config.mcm_config().step)
    windows = [(a.start, a.end) for a in dataset.labels]
    return emit_plots(traces, windows, ctx.directory / "plots")


STAGE_FUNCS = {
    "generate": stage_generate,
    "featurize": stage_featurize,
    "train": stage_train,
    "detect": stage_detect,
    "rootcause": stage_rootcause,
    "evaluate": stage_evaluate,
    "plot": stage_plot,
}


# -- orchestration -----------------------------------------------------------

def versions() -> dict:
    import pandas
    import torch

    return {"rsmgan": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "pandas": pandas.__version__, "torch": torch.__version__}


def write_manifest(config: ExperimentConfig, output: Path, runs: list[dict]) -> Path:
    manifest = {
        "name": config.name,
        "config_hash": config.config_hash(),
        "seeds": config.seeds,
        "versions": versions(),
        "config": config.to_dict(),
        "runs": runs,
    }
    path = output / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path


def summarise(groups: list[tuple[str, list[RunContext]]], output: Path) -> Path:
    """Per-child mean reports plus one CSV row per child and scoring method."""
    rows = []
    for label, contexts in groups:
        per_method: dict[str, list[EvalReport]] = {m: [] for m in det.METHODS}
        for ctx in contexts:
            for method in det.METHODS:
                data = json.loads((ctx.directory / "reports" / f"{method}.json").read_text())
                per_method[method].append(EvalReport(**data))
        base = contexts[0].directory.parent
        means = {m: mean_report(r) for m, r in per_method.items()}
        (base / "mean_report.json").write_text(json.dumps(means, indent=2, sort_keys=True))
        for method, mean in means.items():
            rows.append({"run": label or "default", "scoring": method, "seeds": len(contexts), **mean})
    path = output / "results.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


def execute(config: ExperimentConfig, stages, output: Path | None = None) -> int:
    output = Path(output or config.output)
    output.mkdir(parents=True, exist_ok=True)
    (output / "config.yaml").write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))
    groups = run_contexts(config, output)
    runs, failed = [], False
    for label, contexts in groups:
        for ctx in contexts:
            ctx.directory.mkdir(parents=True, exist_ok=True)
            marker = ctx.directory / "FAILED"
            record = {"run": label or "default", "seed": ctx.seed, "directory": str(ctx.directory),
                      "stages": list(stages)}
            try:
                for stage in stages:
                    log.info("%s seed %d: %s", label or "default", ctx.seed, stage)
                    STAGE_FUNCS[stage](ctx)
                marker.unlink(missing_ok=True)
                record["status"] = "ok"
            except Exception as exc:  # keep partial artifacts, mark the run
                failed = True
                marker.write_text(traceback.format_exc())
                record["status"] = f"failed: {exc}"
                log.error("%s seed %d failed: %s", label or "default", ctx.seed, exc)
            runs.append(record)
    if not failed and "evaluate" in stages:
        summarise(groups, output)
    write_manifest(config, output, runs)
    if failed:
        (output / "FAILED").write_text("\n".join(r["directory"] for r in runs if r["status"] != "ok"))
    else:
        (output / "FAILED").unlink(missing_ok=True)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsmgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in (*STAGES, "run-all"):
        p = sub.add_parser(verb)
        p.add_argument("-c", "--config", required=True, help="experiment YAML file")
        p.add_argument("-o", "--output", help="override the output directory")
        p.add_argument("--seed", type=int, action="append", help="replace the config's seeds (repeatable)")
        p.add_argument("--epochs", type=int, help="override network.epochs")
        p.add_argument("--full-scale", action="store_true",
                       help="full network widths and 300 epochs instead of the desk defaults")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    data = yaml.safe_load(Path(args.config).read_text()) or {}
    network = dict(data.get("network") or {})
    if args.full_scale:
        network.update(FULL_NETWORK)
    if args.epochs is not None:
        network["epochs"] = args.epochs
    data["network"] = network
    if args.seed:
        data["seeds"] = args.seed
    try:
        config = ExperimentConfig.from_dict(data)
    except (ValueError, TypeError, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    stages = STAGES if args.verb == "run-all" else (args.verb,)
    return execute(config, stages, args.output)


if __name__ == "__main__":
    sys.exit(main())
