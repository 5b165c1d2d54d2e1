"""Error-versus-labels curves rendered as standalone SVG 1.1."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .sweep import read_aggregate_csv

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


@dataclass(frozen=True)
class Frame:
    """Maps (n_labeled, percent error) to pixel coordinates."""

    xs: tuple[int, ...]
    y_max: float

    def x(self, n_labeled) -> float:
        span = WIDTH - LEFT - RIGHT
        if len(self.xs) == 1:
            return LEFT + span / 2
        lo, hi = math.log(self.xs[0]), math.log(self.xs[-1])
        return LEFT + span * (math.log(n_labeled) - lo) / (hi - lo)

    def y(self, percent) -> float:
        span = HEIGHT - TOP - BOTTOM
        return TOP + span * (1.0 - percent / self.y_max)


def _pt(x, y):
    return f"{x:.3f},{y:.3f}"


def _nice_max(v):
    if v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= v:
            return m * mag
    return 10 * mag


def plot_curves(csv_path, svg_path) -> Frame:
    """Render one line with a +/-1 std band per method from an aggregate CSV."""
    rows = read_aggregate_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no aggregate rows to plot")
    methods = sorted({r.method for r in rows})
    xs = tuple(sorted({r.n_labeled for r in rows}))
    top = max(100 * (r.mean_error + r.std_error) for r in rows)
    frame = Frame(xs, _nice_max(top * 1.05))

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=str(WIDTH), height=str(HEIGHT), viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    axes = ET.SubElement(svg, "g", {"class": "axes", "stroke": "black", "font-family": "sans-serif",
                                    "font-size": "11"})
    x0, x1, y0, y1 = LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP
    ET.SubElement(axes, "line", x1=str(x0), y1=str(y0), x2=str(x1), y2=str(y0))
    ET.SubElement(axes, "line", x1=str(x0), y1=str(y0), x2=str(x0), y2=str(y1))
    for n in xs:
        px = frame.x(n)
        ET.SubElement(axes, "line", x1=f"{px:.3f}", y1=str(y0), x2=f"{px:.3f}", y2=str(y0 + 5))
        t = ET.SubElement(axes, "text", x=f"{px:.3f}", y=str(y0 + 18), stroke="none", **{"text-anchor": "middle"})
        t.text = str(n)
    for i in range(6):
        val = frame.y_max * i / 5
        py = frame.y(val)
        ET.SubElement(axes, "line", x1=str(x0 - 5), y1=f"{py:.3f}", x2=str(x0), y2=f"{py:.3f}")
        t = ET.SubElement(axes, "text", x=str(x0 - 8), y=f"{py + 4:.3f}", stroke="none", **{"text-anchor": "end"})
        t.text = f"{val:g}"
    xl = ET.SubElement(axes, "text", x=str((x0 + x1) / 2), y=str(HEIGHT - 15), stroke="none",
                       **{"text-anchor": "middle"})
    xl.text = "labeled examples"
    yl = ET.SubElement(axes, "text", x="18", y=str((y0 + y1) / 2), stroke="none",
                       transform=f"rotate(-90 18 {(y0 + y1) / 2})", **{"text-anchor": "middle"})
    yl.text = "test error (%)"

    legend = ET.SubElement(svg, "g", {"class": "legend", "font-family": "sans-serif", "font-size": "12"})
    for i, method in enumerate(methods):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted((r for r in rows if r.method == method), key=lambda r: r.n_labeled)
        upper = [_pt(frame.x(r.n_labeled), frame.y(100 * (r.mean_error + r.std_error))) for r in pts]
        lower = [_pt(frame.x(r.n_labeled), frame.y(100 * (r.mean_error - r.std_error))) for r in reversed(pts)]
        ET.SubElement(svg, "polygon", {"class": "band", "data-method": method, "points": " ".join(upper + lower),
                                       "fill": color, "fill-opacity": "0.2", "stroke": "none"})
        line = [_pt(frame.x(r.n_labeled), frame.y(100 * r.mean_error)) for r in pts]
        ET.SubElement(svg, "polyline", {"class": "curve", "data-method": method, "points": " ".join(line),
                                        "fill": "none", "stroke": color, "stroke-width": "2"})
        ly = TOP + 10 + 18 * i
        ET.SubElement(legend, "line", x1=str(WIDTH - RIGHT + 15), y1=str(ly), x2=str(WIDTH - RIGHT + 35),
                      y2=str(ly), stroke=color, **{"stroke-width": "2"})
        t = ET.SubElement(legend, "text", x=str(WIDTH - RIGHT + 40), y=str(ly + 4))
        t.text = method

    ET.ElementTree(svg).write(svg_path, encoding="utf-8", xml_declaration=True)
    return frame
