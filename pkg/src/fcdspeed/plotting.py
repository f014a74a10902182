"""Report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no Software/date chunks, so reruns produce identical bytes
_PNG_META = {"Software": None}

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 100,
})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_diff_histogram(hist, path, title="speed difference a - b"):
    fig, ax = plt.subplots(figsize=(5, 3))
    if len(hist):
        width = (hist["bin_hi"] - hist["bin_lo"]).to_numpy()
        ax.bar(hist["bin_lo"], hist["count"], width=width, align="edge", color="0.4", edgecolor="w")
    ax.set_xlabel("diff [km/h]")
    ax.set_ylabel("# pairs")
    ax.set_title(title)
    return _save(fig, path)


def plot_group_stats(stats, group_by, path):
    body = stats[stats[group_by] != "TOTAL"]
    fig, ax = plt.subplots(figsize=(5, 3))
    x = np.arange(len(body))
    ax.bar(x, body["diff_mean"], yerr=body["diff_std"], color="0.6", capsize=3)
    ax.scatter(x, body["diff_median"], marker="x", color="k", zorder=3, label="median")
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xticks(x)
    ax.set_xticklabels(body[group_by], rotation=30, ha="right")
    ax.set_ylabel("diff mean ± std [km/h]")
    if len(body):
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_harmonic_check(rows, path):
    """rows: dicts with harmonic, arithmetic, binned, equal_counts_binned."""
    h = np.array([r["harmonic"] for r in rows])
    a = np.array([r["arithmetic"] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 4))
    lim = [0, 120]
    ax.plot(lim, lim, color="0.7", lw=0.8)
    ax.scatter(h, [r["binned"] for r in rows], s=12, label="rate ∝ 1/v vs harmonic")
    ax.scatter(a, [r["equal_counts_binned"] for r in rows], s=12, marker="^", label="equal readings vs arithmetic")
    ax.set_xlim(lim)
    ax.set_ylim(lim)
    ax.set_xlabel("analytic mean [km/h]")
    ax.set_ylabel("binned speed [km/h]")
    ax.legend(frameon=False, fontsize=7)
    return _save(fig, path)


def plot_coverage(coverage: dict, path):
    names = [k for k in ("axis", "diagonal", "other") if k in coverage]
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(names, [coverage[k] for k in names], color=["0.3", "0.55", "0.8"][: len(names)])
    ax.set_ylabel("temporal coverage")
    ax.set_ylim(0, 1)
    return _save(fig, path)
