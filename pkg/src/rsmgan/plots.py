"""Score-over-time figures with the labelled anomaly windows shaded."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .detect import ScoreTrace  # noqa: E402


def trace_figure(trace: ScoreTrace, windows: Sequence[tuple[int, int]] = (), title: str | None = None):
    """One step-plot of the trace; x is the first raw point of each step.

    Only windows overlapping the trace's range are shaded. An empty trace
    still produces a figure (with empty axes).
    """
    fig, ax = plt.subplots(figsize=(10, 3))
    x = np.asarray(trace.step_index) * trace.step
    ax.plot(x, trace.scores, drawstyle="steps-post", lw=1.0, color="tab:blue", label=trace.method)
    if len(x):
        lo, hi = x[0], x[-1] + trace.step
        for s, e in windows:
            if e > lo and s < hi:
                ax.axvspan(s, e, color="tab:red", alpha=0.25, lw=0)
        ax.set_xlim(lo, hi)
    ax.set_xlabel("time point")
    ax.set_ylabel("anomaly score")
    ax.set_title(title or trace.method)
    fig.tight_layout()
    return fig


def emit_plots(traces: dict[str, ScoreTrace], windows, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for method, trace in traces.items():
        fig = trace_figure(trace, windows)
        path = directory / f"scores_{method}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths
