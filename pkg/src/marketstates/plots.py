"""Figure rendering for the report bundle.

Each function reads one of the delimited report artifacts and writes a PNG
next to it, so figures can be regenerated from the data files alone.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.dates as mdates
import matplotlib.pyplot as plt
import numpy as np

STATE_CMAP = "viridis"


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def render_states(path: Path) -> list[Path]:
    """Step plot of the state label sequence, one panel per (kind, k)."""
    header, rows = _read_csv(path)
    dates = [np.datetime64(r[1]) for r in rows]
    outputs = []
    for col, name in enumerate(header[2:], start=2):
        labels = [int(r[col]) for r in rows]
        fig, ax = plt.subplots(figsize=(11, 3))
        ax.scatter(dates, labels, c=labels, cmap=STATE_CMAP, s=4)
        ax.set_ylabel("market state")
        ax.set_yticks(sorted(set(labels)))
        ax.set_title(name)
        ax.xaxis.set_major_locator(mdates.AutoDateLocator())
        fig.tight_layout()
        out = path.with_name(f"{path.stem}_{name}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        outputs.append(out)
    return outputs


def render_transitions(path: Path) -> list[Path]:
    """Heatmap of each transition probability matrix."""
    _, rows = _read_csv(path)
    runs = {}
    for kind, k, a, b, _count, prob in rows:
        runs.setdefault((kind, int(k)), {})[(int(a), int(b))] = float(prob)
    outputs = []
    for (kind, k), cells in runs.items():
        matrix = np.zeros((k, k))
        for (a, b), p in cells.items():
            matrix[a - 1, b - 1] = p
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(matrix, cmap="Blues", vmin=0, vmax=1, origin="lower",
                       extent=(0.5, k + 0.5, 0.5, k + 0.5))
        for a in range(k):
            for b in range(k):
                ax.text(b + 1, a + 1, f"{matrix[a, b]:.2f}",
                        ha="center", va="center", fontsize=7)
        ax.set_xlabel("to state")
        ax.set_ylabel("from state")
        ax.set_title(f"{kind}, k={k}")
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        out = path.with_name(f"{path.stem}_{kind}_k{k}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        outputs.append(out)
    return outputs


def render_histograms(path: Path) -> Path:
    """Heatmap of element distributions over time (epochs x bins)."""
    header, rows = _read_csv(path)
    edges = np.array([float(v) for v in header[2:]])
    counts = np.array([[int(v) for v in r[2:]] for r in rows], dtype=float)
    dates = [np.datetime64(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(11, 4))
    with np.errstate(divide="ignore"):
        img = np.log10(np.where(counts > 0, counts, np.nan))
    ax.imshow(img.T, aspect="auto", origin="lower", cmap="magma",
              extent=(mdates.date2num(dates[0]), mdates.date2num(dates[-1]),
                      edges[0], edges[-1] + (edges[1] - edges[0])))
    ax.xaxis_date()
    ax.set_ylabel("correlation matrix element")
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_pr(path: Path) -> Path:
    """Participation-ratio time series with the GOE N/3 reference line."""
    header, rows = _read_csv(path)
    dates = [np.datetime64(r[0]) for r in rows]
    pr_cols = [(i, name) for i, name in enumerate(header) if name.startswith("pr_")]
    fig, axes = plt.subplots(len(pr_cols), 1, figsize=(11, 2.8 * len(pr_cols)),
                             squeeze=False, sharex=True)
    for ax, (col, name) in zip(axes.ravel(), pr_cols):
        values = [float(r[col]) for r in rows]
        ax.plot(dates, values, lw=0.6)
        ax.set_ylabel(name)
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_mds(path: Path) -> Path:
    """3D scatter of the MDS embedding colored by state."""
    _, rows = _read_csv(path)
    coords = np.array([[float(r[2]), float(r[3]), float(r[4])] for r in rows])
    labels = np.array([int(r[5]) for r in rows])
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    sc = ax.scatter(coords[:, 0], coords[:, 1], coords[:, 2],
                    c=labels, cmap=STATE_CMAP, s=6)
    fig.colorbar(sc, ax=ax, label="state", shrink=0.7)
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_moments(path: Path) -> Path | None:
    """Bar chart of PR period moments per named period, if any."""
    moments = json.loads(path.read_text())
    rows = [(kind, name, vals) for kind, by_period in moments.items()
            for name, vals in by_period.items()]
    if not rows:
        return None
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    labels = [f"{kind}\n{name}" for kind, name, _ in rows]
    ax1.bar(labels, [v["mean"] for _, _, v in rows])
    ax1.set_ylabel("PR mean")
    ax2.bar(labels, [v["variance"] for _, _, v in rows])
    ax2.set_ylabel("PR variance")
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_report(report_dir) -> list[Path]:
    """Render every figure the report data supports; returns written paths."""
    report_dir = Path(report_dir)
    written = []
    if (report_dir / "fig1_states.csv").is_file():
        written += render_states(report_dir / "fig1_states.csv")
    if (report_dir / "fig3_transitions.csv").is_file():
        written += render_transitions(report_dir / "fig3_transitions.csv")
    for hist in sorted(report_dir.glob("fig4_histograms*.csv")):
        written.append(render_histograms(hist))
    if (report_dir / "fig5_pr.csv").is_file():
        written.append(render_pr(report_dir / "fig5_pr.csv"))
    if (report_dir / "fig6_moments.json").is_file():
        out = render_moments(report_dir / "fig6_moments.json")
        if out:
            written.append(out)
    if (report_dir / "figS3_mds.csv").is_file():
        written.append(render_mds(report_dir / "figS3_mds.csv"))
    return written
