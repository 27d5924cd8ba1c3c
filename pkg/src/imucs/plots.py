"""SVG figures derived from sweep results. Plotting never mutates the rows."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_sweep(result, path):
    series = defaultdict(lambda: defaultdict(list))
    for r in result.rows:
        if r["status"] == "ok":
            series[r["method"]][r["m"]].append(r["mse"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, by_m in series.items():
        ms = sorted(by_m)
        ax.plot(ms, [sum(by_m[m]) / len(by_m[m]) for m in ms], marker="o", label=method)
    ax.set_xlabel("measurements m")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_latency(result, path):
    series = defaultdict(list)
    for r in result.rows:
        if r["status"] == "ok":
            series[r["method"]].append((r["input_samples"], r["median_seconds"]))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, pts in series.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("input samples (m x b)")
    ax.set_ylabel("median decode time [s]")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
