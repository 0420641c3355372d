"""Summary tables and figures from a results directory.

Reads the *_results.json / *_plot_data.csv / trajectory.csv artifacts an
experiment run produced, regenerates a deterministic summary table
(summary.csv, byte-stable across runs over the same artifacts) and
renders diagnostic figures next to the delimited files: histograms of
the self-normalized statistics against the standard normal density, and
trajectory traces.
"""

from __future__ import annotations

import glob
import math
import os

import numpy as np

from .io_utils import read_csv, read_json, write_csv

SUMMARY_COLUMNS = ["source", "test_id", "kind", "statistic", "p_value", "n_samples",
                   "excluded", "target", "threshold", "status"]


def _status(r: dict) -> str:
    if r.get("skipped"):
        return "skip"
    return "pass" if r.get("passed") else "fail"


def build_summary_rows(directory: str) -> list[list]:
    rows = []
    for path in sorted(glob.glob(os.path.join(directory, "*_results.json"))):
        doc = read_json(path)
        src = os.path.basename(path).removesuffix("_results.json")
        for r in doc.get("results", []):
            rows.append([src, r["test_id"], r["kind"], r["statistic"],
                         r["p_value"], r["n_samples"], r.get("excluded", 0),
                         r["target"], r["threshold"], _status(r)])
    for path in sorted(glob.glob(os.path.join(directory, "cid_report.json"))):
        doc = read_json(path)
        rows.append(["cid_report", doc.get("rule", "cid"), "point",
                     doc["worst_residual"], None, doc["partitions_checked"],
                     0, "consistency identity", doc["tolerance"],
                     "pass" if doc["passed"] else "fail"])
    return rows


def _figure_targets(directory: str) -> dict[str, dict[str, list[float]]]:
    """statistic -> {column label -> values} from tidy plot-data files."""
    out: dict[str, dict[str, list[float]]] = {}
    for path in sorted(glob.glob(os.path.join(directory, "*_plot_data.csv"))):
        stem = os.path.basename(path).removesuffix("_plot_data.csv")
        _, header, rows = read_csv(path)
        idx = {name: k for k, name in enumerate(header)}
        for row in rows:
            stat = row[idx["statistic"]]
            val = float(row[idx["value"]])
            out.setdefault(f"{stem}:{stat}", {}).setdefault("values", []).append(val)
    return out


def render_figures(directory: str) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for name, data in _figure_targets(directory).items():
        vals = np.asarray(data["values"])
        safe = name.replace(":", "_").replace("[", "_").replace("]", "")
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        if "selfnorm" in name:
            ax.hist(vals, bins=40, density=True, alpha=0.65, label=name.split(":")[1])
            xs = np.linspace(-4, 4, 401)
            ax.plot(xs, np.exp(-xs ** 2 / 2) / math.sqrt(2 * math.pi),
                    lw=1.5, label="N(0,1)")
            ax.legend(frameon=False, fontsize=8)
        else:
            ax.hist(vals, bins=40, density=True, alpha=0.8)
            ax.axvline(float(np.mean(vals)), color="k", lw=1.0, ls="--")
            ax.set_xlabel(name.split(":")[1])
        ax.set_title(name, fontsize=9)
        fig.tight_layout()
        path = os.path.join(directory, f"fig_{safe}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    traj_path = os.path.join(directory, "trajectory.csv")
    if os.path.exists(traj_path):
        _, header, rows = read_csv(traj_path)
        idx = {name: k for k, name in enumerate(header)}
        steps = np.array([float(r[idx["step"]]) for r in rows])
        L = np.array([float(r[idx["L"]]) for r in rows])
        fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.2))
        axes[0].plot(steps, L, lw=1.0)
        axes[0].set_xlabel("step")
        axes[0].set_ylabel("species count")
        mcols = [c for c in header if c.startswith("M:")]
        for c in mcols:
            m = np.array([float(r[idx[c]]) for r in rows])
            v = np.array([float(r[idx["V:" + c[2:]]]) for r in rows])
            axes[1].plot(steps, m, lw=1.0, label=c)
            axes[1].plot(steps, v, lw=0.8, ls="--", label="V:" + c[2:])
        axes[1].set_xlabel("step")
        axes[1].legend(frameon=False, fontsize=7)
        fig.tight_layout()
        path = os.path.join(directory, "fig_trajectory.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def generate(directory: str) -> list[str]:
    """Write summary.csv and all figures; returns the paths written."""
    rows = build_summary_rows(directory)
    written = []
    summary_path = os.path.join(directory, "summary.csv")
    write_csv(summary_path, SUMMARY_COLUMNS, rows, "summary/1")
    written.append(summary_path)
    written.extend(render_figures(directory))
    return written
