"""Minimal standalone SVG line charts."""

from __future__ import annotations

import html
import math
from pathlib import Path

WIDTH, HEIGHT = 640, 400
MARGIN = 60


def _ticks(lo, hi, count=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def render_svg(x, y, xlabel="t", ylabel="", title="", log_y=False, metadata: str = "") -> str:
    """SVG text for a single polyline through ``(x, y)``.

    Data are mapped into a ``[0, w] x [0, h]`` box drawn under a y-flip, so
    polyline coordinates increase with the data in both axes.
    """
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    if not x or len(x) != len(y):
        raise ValueError("need a non-empty series with matching x and y")
    if log_y:
        if any(v <= 0 for v in y):
            raise ValueError("log scale needs positive values")
        y = [math.log10(v) for v in y]
    if not all(math.isfinite(v) for v in x + y):
        raise ValueError("series has non-finite values")
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    x0, x1 = min(x), max(x)
    y0, y1 = min(y), max(y)
    sx = w / (x1 - x0) if x1 > x0 else 0.0
    sy = h / (y1 - y0) if y1 > y0 else 0.0
    pts = " ".join(
        f"{(a - x0) * sx if sx else w / 2:.3f},{(b - y0) * sy if sy else h / 2:.3f}"
        for a, b in zip(x, y)
    )
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
    ]
    if metadata:
        out.append(f"<metadata>{html.escape(metadata)}</metadata>")
    out.append('<rect width="100%" height="100%" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" '
                   f'font-size="16">{html.escape(title)}</text>')
    out.append(f'<g transform="translate({MARGIN},{HEIGHT - MARGIN}) scale(1,-1)">')
    out.append(f'<line x1="0" y1="0" x2="{w}" y2="0" stroke="black"/>')
    out.append(f'<line x1="0" y1="0" x2="0" y2="{h}" stroke="black"/>')
    out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>')
    out.append("</g>")
    for v in _ticks(x0, x1):
        px = MARGIN + ((v - x0) * sx if sx else w / 2)
        out.append(f'<text x="{px:.1f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                   f'font-size="11">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        py = HEIGHT - MARGIN - ((v - y0) * sy if sy else h / 2)
        label = f"1e{v:.2g}" if log_y else f"{v:.3g}"
        out.append(f'<text x="{MARGIN - 6}" y="{py:.1f}" text-anchor="end" '
                   f'font-size="11">{label}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" '
               f'font-size="13">{html.escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 15 {HEIGHT / 2})">{html.escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, path, column: str = "J", log_y: bool = False, title: str = "",
              metadata: str = "") -> Path:
    """Plot ``t`` against ``column`` of a report series (objects or dicts)."""
    series = list(series)
    if not series:
        raise ValueError("empty series")

    def get(r, k):
        return r[k] if isinstance(r, dict) else getattr(r, k)

    attr = {"x0a_norm_sq": "norm_x0a_sq", "l2_norm_sq": "norm_l2_sq"}.get(column, column)
    if not isinstance(series[0], dict):
        column_key = attr
    else:
        column_key = column
    rows = [(get(r, "t"), get(r, column_key)) for r in series]
    rows = [(a, b) for a, b in rows if math.isfinite(b)]
    svg = render_svg([a for a, _ in rows], [b for _, b in rows], "t", column, title, log_y, metadata)
    path = Path(path)
    path.write_text(svg)
    return path
