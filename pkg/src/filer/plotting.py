"""Figures written next to the CLI's delimited outputs."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

INLIER_COLOR = "#1f3fd6"
OUTLIER_COLOR = "#d62020"

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.savefig(os.fspath(path), bbox_inches="tight")
    plt.close(fig)


def match_overlay(path, image_a, image_b, matches, max_lines: int = 400) -> None:
    """Side-by-side pair with blue inlier and red outlier correspondence lines."""
    with plt.rc_context(STYLE):
        h = max(image_a.shape[0], image_b.shape[0])
        canvas = np.zeros((h, image_a.shape[1] + image_b.shape[1]))
        canvas[:image_a.shape[0], :image_a.shape[1]] = image_a
        canvas[:image_b.shape[0], image_a.shape[1]:] = image_b
        fig, ax = plt.subplots(figsize=(10, 5 * h / canvas.shape[1] * 2))
        ax.imshow(canvas, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        off = image_a.shape[1]
        if len(matches) and matches.xy_a is not None:
            inl = matches.inlier
            # outliers first so inliers are drawn on top
            for mask, color in ((~inl, OUTLIER_COLOR), (inl, INLIER_COLOR)):
                idx = np.nonzero(mask)[0][:max_lines]
                for i in idx:
                    (xa, ya), (xb, yb) = matches.xy_a[i], matches.xy_b[i]
                    ax.plot([xa, xb + off], [ya, yb], color=color, lw=0.5, alpha=0.8)
        ax.set_axis_off()
        ax.set_title(f"{matches.n_inliers} inliers / {len(matches)} putative")
        _save(fig, path)


def keypoint_figure(path, i_out, points) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 6 * i_out.shape[0] / i_out.shape[1]))
        ax.imshow(i_out, cmap="gray", interpolation="nearest")
        if points:
            xy = np.array([(p.x, p.y) for p in points])
            ax.plot(xy[:, 0], xy[:, 1], "+", color=OUTLIER_COLOR, ms=3, mew=0.6)
        ax.set_title(f"{len(points)} features")
        ax.set_axis_off()
        _save(fig, path)


def sweep_figure(path, rows) -> None:
    """NCM and CMR against rotation angle for a sweep."""
    ok = [r for r in rows if r.get("status") == "ok"]
    with plt.rc_context(STYLE):
        fig, ax1 = plt.subplots(figsize=(6, 3))
        if ok:
            ang = [r["angle"] for r in ok]
            ax1.plot(ang, [r["ncm"] for r in ok], "o-", color=INLIER_COLOR, ms=3, label="NCM")
            ax2 = ax1.twinx()
            ax2.plot(ang, [r["cmr"] for r in ok], "s--", color=OUTLIER_COLOR, ms=3, label="CMR")
            ax2.set_ylabel("CMR (%)")
            ax2.set_ylim(0, 105)
        ax1.set_xlabel("rotation (deg)")
        ax1.set_ylabel("NCM")
        ax1.set_xlim(0, 360)
        _save(fig, path)


def report_figure(path, rows) -> None:
    """Per-pair NCM bars for an evaluation run."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(rows) + 2), 3))
        ncm = [r.get("ncm", 0) if r.get("status") == "ok" else 0 for r in rows]
        colors = [INLIER_COLOR if r.get("status") == "ok" else OUTLIER_COLOR for r in rows]
        ax.bar(np.arange(len(rows)), ncm, color=colors)
        ax.set_xlabel("pair")
        ax.set_ylabel("NCM")
        _save(fig, path)
