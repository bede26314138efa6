"""SVG figures plus the exact numbers behind them as CSV."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import cbook  # noqa: E402

# reproducible SVG output: no timestamps, fixed element ids
matplotlib.rcParams["svg.hashsalt"] = "iaac"
SVG_META = {"Date": None, "Creator": None}


def _read_csv(path, required) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return rows


def run_label(path) -> str:
    """``<label>/seed_xxx/log.csv`` gives ``<label>``; otherwise the parent directory name."""
    p = Path(path)
    return p.parent.parent.name if p.parent.name.startswith("seed_") else p.parent.name


def curve_on_grid(steps, values, grid) -> np.ndarray:
    """Latest logged value at or before each grid point (NaN before the first entry)."""
    idx = np.searchsorted(steps, grid, side="right") - 1
    out = np.where(idx >= 0, np.asarray(values)[np.maximum(idx, 0)], np.nan)
    return out


def learning_curves(files, out_dir, grid_points: int = 100, title: str = "") -> list:
    groups = {}
    for f in files:
        rows = _read_csv(f, ("env_steps", "rolling_return_100"))
        try:
            steps = np.array([int(r["env_steps"]) for r in rows])
            vals = np.array([float(r["rolling_return_100"]) for r in rows])
        except ValueError as e:
            raise ValueError(f"{f}: malformed numbers ({e})") from e
        groups.setdefault(run_label(f), []).append((steps, vals))
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(6, 4))
    table = []
    for label, runs in groups.items():
        end = min(s[-1] for s, _ in runs)
        grid = np.linspace(0, end, grid_points)
        curves = np.array([curve_on_grid(s, v, grid) for s, v in runs])
        ok = ~np.isnan(curves).any(axis=0)
        grid, curves = grid[ok], curves[:, ok]
        mean, std = curves.mean(axis=0), curves.std(axis=0)
        ax.plot(grid, mean, label=f"{label} (n={len(runs)})")
        ax.fill_between(grid, mean - std, mean + std, alpha=0.2)
        table += [(label, g, m, s, len(runs)) for g, m, s in zip(grid, mean, std)]
    ax.set_xlabel("environment steps")
    ax.set_ylabel("return (rolling mean of 100 episodes)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    svg, data = out_dir / "learning_curves.svg", out_dir / "learning_curves.csv"
    fig.savefig(svg, metadata=SVG_META)
    plt.close(fig)
    with open(data, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label", "env_steps", "mean", "std", "runs"])
        for label, g, m, s, n in table:
            w.writerow([label, repr(float(g)), repr(float(m)), repr(float(s)), n])
    return [svg, data]


def epsilon_boxplots(files, out_dir, delta: float | None = None, title: str = "") -> list:
    groups = {}
    for f in files:
        for r in _read_csv(f, ("instance_id", "delta", "epsilon")):
            try:
                d, eps = float(r["delta"]), float(r["epsilon"])
            except ValueError as e:
                raise ValueError(f"{f}: malformed numbers ({e})") from e
            if delta is not None and d != delta:
                continue
            key = r["instance_id"] if delta is not None else f"delta={d:g}"
            groups.setdefault(key, []).append(eps)
    if not groups:
        raise ValueError("no epsilon values to plot")
    labels = list(groups)
    stats = [cbook.boxplot_stats(np.array(groups[k]), whis=1.5)[0] for k in labels]
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(labels) + 2), 4))
    ax.bxp(stats, showfliers=True)
    ax.set_xticks(range(1, len(labels) + 1), labels, rotation=45, ha="right", fontsize="small")
    ax.axhline(0.0, color="grey", lw=0.8, ls="--")
    ax.set_ylabel("epsilon")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    svg, data = out_dir / "epsilon_boxplot.svg", out_dir / "epsilon_boxplot.csv"
    fig.savefig(svg, metadata=SVG_META)
    plt.close(fig)
    with open(data, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["group", "n", "q1", "median", "q3", "whisker_low", "whisker_high", "mean"])
        for k, s in zip(labels, stats):
            w.writerow([k, len(groups[k]), repr(float(s["q1"])), repr(float(s["med"])),
                        repr(float(s["q3"])), repr(float(s["whislo"])), repr(float(s["whishi"])),
                        repr(float(s["mean"]))])
    return [svg, data]
