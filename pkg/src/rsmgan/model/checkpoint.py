"""Checkpoint directories: ``params.pt``, ``config.json`` and ``history.csv``."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import torch

from .training import NetworkConfig, RSMGAN, ReconstructionModel

FORMAT_VERSION = 1


def save_checkpoint(model: ReconstructionModel, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.net.state_dict(), directory / "params.pt")
    meta = {
        "format_version": FORMAT_VERSION,
        "network": model.config.to_dict(),
        "n": model.n,
        "channels": model.channels,
        "n_slots": model.n_slots,
    }
    (directory / "config.json").write_text(json.dumps(meta, indent=2))
    with open(directory / "history.csv", "w", newline="") as fh:
        if model.history:
            writer = csv.DictWriter(fh, fieldnames=list(model.history[0]))
            writer.writeheader()
            writer.writerows(model.history)
    return directory


def load_checkpoint(directory: str | Path, device: str | None = None) -> ReconstructionModel:
    directory = Path(directory)
    meta = json.loads((directory / "config.json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    config = NetworkConfig(**meta["network"])
    if device is not None:
        config.device = device
    net = RSMGAN(meta["n"], meta["channels"], config)
    net.load_state_dict(torch.load(directory / "params.pt", map_location=config.device))
    net.to(config.device).eval()
    history = []
    path = directory / "history.csv"
    if path.exists() and path.stat().st_size:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                history.append({k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()})
    return ReconstructionModel(net, config, meta["n"], meta["channels"], meta["n_slots"], history)
