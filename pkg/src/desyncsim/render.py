"""Deterministic SVG timelines: one lane per rank, rank 0 on top.

Compute intervals are light, communication waits red, injected idle dark
blue; dotted separators mark contention-domain boundaries.  Long runs are
rasterized into per-pixel bins (the most "interesting" kind wins a pixel)
so file size stays bounded regardless of step count, and the output is a
pure function of the trace and options.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trace import COMPUTE, IDLE_INJECTED, WAIT, Trace

__all__ = ["RenderOptions", "render_timeline", "COLORS"]

COLORS = {
    COMPUTE: "#cfdef2",  # light blue
    WAIT: "#d62728",  # red
    IDLE_INJECTED: "#1f3a93",  # dark blue
}
_BACKGROUND = "#ffffff"
_SEPARATOR = "#555555"
_WAVEFRONT = "#111111"
# a pixel shared by several kinds shows the rarest/most telling one
_PRIORITY = {COMPUTE: 1, WAIT: 2, IDLE_INJECTED: 3}


@dataclass(frozen=True)
class RenderOptions:
    width: int = 1200
    lane_height: int = 8
    lane_gap: int = 1
    margin_left: int = 60
    margin_top: int = 20
    margin_bottom: int = 30
    time_range: tuple | None = None  # (t0, t1) seconds; default full run
    wavefront_step: int | None = None  # overlay completion polyline
    ticks: int = 5


def _bins_of_rank(trace: Trace, rank: int, t0: float, t1: float, width: int) -> list:
    """Per-pixel dominant kind for one lane; 0 means no interval there."""
    bins = [0] * width
    scale = width / (t1 - t0)
    for kind, _step, start, end in trace.intervals[rank]:
        if end <= t0 or start >= t1 or end <= start:
            continue
        b0 = max(0, int((max(start, t0) - t0) * scale))
        b1 = min(width - 1, int((min(end, t1) - t0) * scale))
        prio = _PRIORITY[kind]
        for b in range(b0, b1 + 1):
            if bins[b] < prio:
                bins[b] = prio
    return bins


def render_timeline(trace: Trace, options: RenderOptions | None = None) -> str:
    """Render the trace to an SVG string."""
    opt = options or RenderOptions()
    if opt.time_range is not None:
        t0, t1 = opt.time_range
    else:
        t0, t1 = 0.0, trace.makespan()
    if not t1 > t0:
        raise ValueError(f"empty time range ({t0}, {t1})")
    p = trace.processes
    lane_pitch = opt.lane_height + opt.lane_gap
    height = opt.margin_top + p * lane_pitch + opt.margin_bottom
    width = opt.margin_left + opt.width + 20
    by_prio = {prio: kind for kind, prio in _PRIORITY.items()}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" '
        f'fill="{_BACKGROUND}"/>',
    ]
    for rank in range(p):  # rank 0 gets the top lane
        y = opt.margin_top + rank * lane_pitch
        bins = _bins_of_rank(trace, rank, t0, t1, opt.width)
        b = 0
        while b < opt.width:
            prio = bins[b]
            e = b
            while e + 1 < opt.width and bins[e + 1] == prio:
                e += 1
            if prio:
                color = COLORS[by_prio[prio]]
                parts.append(
                    f'<rect x="{opt.margin_left + b}" y="{y}" '
                    f'width="{e - b + 1}" height="{opt.lane_height}" '
                    f'fill="{color}"/>'
                )
            b = e + 1
    # dotted separators between contention domains
    for rank in range(1, p):
        if trace.rank_domain[rank] != trace.rank_domain[rank - 1]:
            y = opt.margin_top + rank * lane_pitch - opt.lane_gap / 2.0
            parts.append(
                f'<line x1="{opt.margin_left}" y1="{y:.1f}" '
                f'x2="{opt.margin_left + opt.width}" y2="{y:.1f}" '
                f'stroke="{_SEPARATOR}" stroke-width="1" '
                f'stroke-dasharray="2,3"/>'
            )
    if opt.wavefront_step is not None:
        times = trace.compute_end_matrix()[:, opt.wavefront_step]
        pts = []
        scale = opt.width / (t1 - t0)
        for rank in range(p):
            x = opt.margin_left + (float(times[rank]) - t0) * scale
            y = opt.margin_top + rank * lane_pitch + opt.lane_height / 2.0
            pts.append(f"{x:.2f},{y:.2f}")
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" '
            f'stroke="{_WAVEFRONT}" stroke-width="1.2"/>'
        )
    # time axis
    axis_y = opt.margin_top + p * lane_pitch + 4
    parts.append(
        f'<line x1="{opt.margin_left}" y1="{axis_y}" '
        f'x2="{opt.margin_left + opt.width}" y2="{axis_y}" '
        f'stroke="#000000" stroke-width="1"/>'
    )
    for i in range(opt.ticks + 1):
        frac = i / opt.ticks
        x = opt.margin_left + frac * opt.width
        t = t0 + frac * (t1 - t0)
        parts.append(
            f'<line x1="{x:.1f}" y1="{axis_y}" x2="{x:.1f}" y2="{axis_y + 4}" '
            f'stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{axis_y + 16}" font-size="10" '
            f'font-family="sans-serif" text-anchor="middle">{t:.4g}</text>'
        )
    parts.append(
        f'<text x="4" y="{opt.margin_top + 8}" font-size="10" '
        f'font-family="sans-serif">rank 0</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
