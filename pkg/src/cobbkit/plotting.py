"""SVG figures of a spine with its measured curves.

Left panel: vertebra outlines, inflection vertebrae boxed, the endplates that
bound each measured window drawn extended. Right panel: the vertebral tilt
profile. Artists carry SVG ids (``vertebra-5``, ``inflection-5``, ``angle-1``)
so the output can be inspected programmatically. Vertebra numbers in ids and
labels are 1-based.
"""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib as mpl  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.patches import Polygon, Rectangle  # noqa: E402

from .landmarks import SpineLandmarks  # noqa: E402
from .report import CobbReport  # noqa: E402

_RC = {
    "svg.fonttype": "none",  # keep labels as <text> elements
    "svg.hashsalt": "cobbkit",
    "font.size": 9,
    "axes.linewidth": 0.8,
}

WINDOW_COLOURS = ("tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple")
CAM_LABELS = ("MT", "PT", "TL")


def _extended(p, q, extra: float):
    p, q = np.asarray(p), np.asarray(q)
    d = q - p
    d = d / (np.hypot(*d) or 1.0)
    return p - extra * d, q + extra * d


def draw_spine(ax, report: CobbReport, sl: SpineLandmarks) -> None:
    corners = sl.corners
    width = float(np.median(np.hypot(*(corners[:, 1] - corners[:, 0]).T)))
    for v in range(len(corners)):
        tl, tr, bl, br = corners[v]
        poly = Polygon([tl, tr, br, bl], closed=True, fill=True, facecolor="0.92",
                       edgecolor="0.25", linewidth=0.8)
        poly.set_gid(f"vertebra-{v + 1}")
        ax.add_patch(poly)
        ax.text(corners[v][:, 0].min() - 0.15 * width, corners[v][:, 1].mean(), str(v + 1),
                ha="right", va="center", fontsize=6, color="0.4")

    for k in report.inflections:
        lo = corners[k].min(axis=0)
        hi = corners[k].max(axis=0)
        pad = 0.08 * width
        box = Rectangle(lo - pad, *(hi - lo + 2 * pad), fill=False, edgecolor="crimson",
                        linewidth=1.4, linestyle="--")
        box.set_gid(f"inflection-{k + 1}")
        ax.add_patch(box)

    tilts = report.tilts
    for i, win in enumerate(report.windows):
        if not tilts:
            break
        span = range(win.first, win.last + 1)
        v_max = max(span, key=lambda v: (tilts[v], -v))
        v_min = min(span, key=lambda v: (tilts[v], v))
        upper, lower = sorted((v_max, v_min))
        colour = WINDOW_COLOURS[i % len(WINDOW_COLOURS)]
        for v, (a, b), tag in ((upper, (0, 1), "upper"), (lower, (2, 3), "lower")):
            p, q = _extended(corners[v][a], corners[v][b], 0.8 * width)
            (line,) = ax.plot([p[0], q[0]], [p[1], q[1]], color=colour, linewidth=1.0,
                              alpha=0.8)
            line.set_gid(f"endplate-{i + 1}-{tag}")

    labels = CAM_LABELS if report.method == "CAM" else ("Cobb 1", "Cobb 2", "Cobb 3")
    for i, (label, angle) in enumerate(zip(labels, report.angles_deg)):
        t = ax.text(0.0, 0.02 + 0.05 * (2 - i), f"{label}: {angle:.1f}°", transform=ax.transAxes,
                    ha="left", va="bottom")
        t.set_gid(f"angle-{i + 1}")

    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.invert_yaxis()
    ax.set_axis_off()
    ax.set_title(f"{report.image_id} ({report.method})")


def draw_tilt_profile(ax, report: CobbReport) -> None:
    if not report.tilts:
        ax.set_axis_off()
        return
    deg = [math.degrees(t) for t in report.tilts]
    idx = np.arange(1, len(deg) + 1)
    ax.axvline(0.0, color="0.6", linewidth=0.6)
    ax.plot(deg, idx, marker="o", markersize=3, color="0.2", linewidth=1.0)
    for k in report.inflections:
        ax.plot([deg[k]], [k + 1], marker="s", markersize=6, markerfacecolor="none",
                markeredgecolor="crimson")
    for i, win in enumerate(report.windows):
        ax.axhspan(win.first + 1 - 0.3, win.last + 1 + 0.3, xmin=0.92 - 0.04 * i,
                   xmax=0.95 - 0.04 * i, color=WINDOW_COLOURS[i % len(WINDOW_COLOURS)], alpha=0.7)
    ax.invert_yaxis()
    ax.set_xlabel("vertebral tilt (deg)")
    ax.set_ylabel("vertebra")
    ax.set_yticks(idx)
    ax.tick_params(labelsize=6)


def spine_figure(report: CobbReport, sl: SpineLandmarks) -> Figure:
    fig = Figure(figsize=(7.0, 6.0))
    ax_spine, ax_tilt = fig.subplots(1, 2, gridspec_kw={"width_ratios": [1.6, 1.0]})
    draw_spine(ax_spine, report, sl)
    draw_tilt_profile(ax_tilt, report)
    fig.tight_layout()
    return fig


def render_svg(report: CobbReport, sl: SpineLandmarks) -> str:
    """Render ``report`` over ``sl`` and return the SVG document as text."""
    with mpl.rc_context(_RC):
        fig = spine_figure(report, sl)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def save_svg(path, report: CobbReport, sl: SpineLandmarks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(report, sl))
