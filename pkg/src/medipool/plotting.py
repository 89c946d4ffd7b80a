"""Forest plot rendered to SVG through matplotlib."""

from __future__ import annotations

import io
import re

import matplotlib
from matplotlib.figure import Figure
from matplotlib.patches import Polygon
from matplotlib.transforms import blended_transform_factory

from .analysis import Analysis
from .kernel import norm_quantile
from .report import percent_weights

WIDTH_PX = 900
TOP_PX, ROW_PX, BOTTOM_PX = 60, 22, 120
_RC = {
    "svg.hashsalt": "medipool",
    "svg.fonttype": "none",
    "font.family": "monospace",
    "font.size": 9,
    "path.simplify": False,
}


def figure_height(k: int) -> int:
    return TOP_PX + ROW_PX * k + BOTTOM_PX


def _study_interval(e, level):
    if e.se is None:
        return None
    z = norm_quantile(1.0 - (1.0 - level) / 2.0)
    return e.y - z * e.se, e.y + z * e.se


def forest_figure(a: Analysis, xlab: str = "Estimate", title: str = ""):
    """Build the figure; returns ``(fig, ax)``. One unit of y is one row."""
    effects = a.effects
    r = a.result
    k = len(effects)
    level = r.level if r is not None else 0.95
    h = figure_height(k)
    # SVG output uses 72 units per inch, so this gives a WIDTH_PX x h viewBox.
    fig = Figure(figsize=(WIDTH_PX / 72.0, h / 72.0), dpi=72)
    left, right = 0.22, 0.70
    ax = fig.add_axes((left, BOTTOM_PX / h * 0.6, right - left,
                       (h - TOP_PX - BOTTOM_PX * 0.6) / h))
    rows_total = k + 2
    ax.set_ylim(-1.0, rows_total - 0.5)

    intervals = [_study_interval(e, level) for e in effects]
    weights = percent_weights(r) if r is not None else [100.0 / k] * k
    xs = [e.y for e in effects]
    for iv in intervals:
        if iv is not None:
            xs.extend(iv)
    if r is not None:
        xs.extend([r.ci_lb, r.ci_ub, r.estimate])
    lo, hi = min(xs), max(xs)
    pad = (hi - lo) * 0.05 or 1.0
    ax.set_xlim(lo - pad, hi + pad)

    row = blended_transform_factory(fig.transFigure, ax.transData)
    wmax = max(weights) or 1.0
    for i, (e, iv, w) in enumerate(zip(effects, intervals, weights), start=1):
        yrow = rows_total - i
        if iv is not None:
            line, = ax.plot(iv, [yrow, yrow], color="black", linewidth=1.0)
            line.set_gid(f"study-{i}-ci")
        size = 20.0 + 130.0 * w / wmax    # marker area in pt^2, proportional to weight
        pts = ax.scatter([e.y], [yrow], s=[size], marker="s", color="black", zorder=3)
        pts.set_gid(f"study-{i}")
        lab = fig.text(0.01, yrow, e.study_id, ha="left", va="center",
                       transform=row)
        lab.set_gid(f"study-{i}-label")
        txt = f"{e.y:.2f}" if iv is None else f"{e.y:.2f} [{iv[0]:.2f}, {iv[1]:.2f}]"
        val = fig.text(0.99, yrow, txt, ha="right", va="center",
                       transform=row)
        val.set_gid(f"study-{i}-value")

    if r is not None:
        yd = 0.0
        diamond = Polygon([(r.ci_lb, yd), (r.estimate, yd + 0.4), (r.ci_ub, yd),
                           (r.estimate, yd - 0.4)], closed=True, color="black")
        diamond.set_gid("pooled-diamond")
        ax.add_patch(diamond)
        lab = fig.text(0.01, yd, _pooled_label(r), ha="left", va="center",
                       transform=row)
        lab.set_gid("pooled-label")
        val = fig.text(0.99, yd, f"{r.estimate:.2f} [{r.ci_lb:.2f}, {r.ci_ub:.2f}]",
                       ha="right", va="center", transform=row)
        val.set_gid("pooled-value")
        if r.model != "order" and r.estimate is not None:
            ax.axvline(0.0, color="grey", linewidth=0.6, linestyle=":")

    ax.set_yticks([])
    for side in ("left", "right", "top"):
        ax.spines[side].set_visible(False)
    ax.set_xlabel(xlab)
    if title:
        fig.suptitle(title)
    return fig, ax


def _pooled_label(r) -> str:
    if r.model == "order":
        return "MM Model" if r.method_label == "mm" else "WM Model"
    if r.method_label == "cd":
        return "CD Model"
    return "RE Model" if r.model == "random" else "CE Model"


def render_svg(a: Analysis, xlab: str = "Estimate", title: str = "") -> str:
    with matplotlib.rc_context(_RC):
        fig, _ = forest_figure(a, xlab, title)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    svg = buf.getvalue()
    # Report the viewport in pixels rather than points.
    return re.sub(r'(width|height)="([\d.]+)pt"', r'\1="\2px"', svg, count=2)


def write_svg(a: Analysis, path, xlab: str = "Estimate", title: str = "") -> None:
    svg = render_svg(a, xlab, title)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
