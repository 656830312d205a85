"""Minimal native SVG charts: axes, polylines, bars.  No plotting deps."""

from __future__ import annotations

import math
from xml.etree import ElementTree as ET

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (1.0, 2.0, 2.5, 5.0, 10.0) if s * mag >= raw) * mag
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.root = ET.Element(
            "svg",
            xmlns="http://www.w3.org/2000/svg",
            width=str(WIDTH),
            height=str(HEIGHT),
            viewBox=f"0 0 {WIDTH} {HEIGHT}",
        )
        ET.SubElement(self.root, "rect", x="0", y="0", width=str(WIDTH),
                      height=str(HEIGHT), fill="white")
        self._text(WIDTH / 2, 22, title, size=15, anchor="middle", weight="bold")
        self._text(WIDTH / 2, HEIGHT - 12, xlabel, anchor="middle")
        t = self._text(16, HEIGHT / 2, ylabel, anchor="middle")
        t.set("transform", f"rotate(-90 16 {HEIGHT / 2})")

    def _text(self, x, y, s, size=12, anchor="start", weight="normal"):
        el = ET.SubElement(self.root, "text", x=f"{x:.1f}", y=f"{y:.1f}")
        el.set("font-family", "sans-serif")
        el.set("font-size", str(size))
        el.set("text-anchor", anchor)
        el.set("font-weight", weight)
        el.text = s
        return el

    def line(self, x1, y1, x2, y2, color="#444", width=1.0):
        ET.SubElement(self.root, "line", x1=f"{x1:.1f}", y1=f"{y1:.1f}",
                      x2=f"{x2:.1f}", y2=f"{y2:.1f}", stroke=color,
                      **{"stroke-width": str(width)})

    def save(self, path):
        ET.ElementTree(self.root).write(path, xml_declaration=True, encoding="unicode")


def _plot_area():
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    return x0, x1, y0, y1  # y0 is the bottom (larger pixel y)


def _fmt(v: float) -> str:
    if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e4):
        return f"{v:.0e}"
    return f"{v:g}"


def line_chart(path, xs, series: dict, title="", xlabel="", ylabel="", logx=False):
    """One polyline per series entry {label: y-values}, shared x grid."""
    xs = [math.log10(x) for x in xs] if logx else list(xs)
    cv = _Canvas(title, xlabel, ylabel)
    px0, px1, py0, py1 = _plot_area()
    all_y = [y for ys in series.values() for y in ys if math.isfinite(y)]
    ylo, yhi = (min(all_y), max(all_y)) if all_y else (0.0, 1.0)
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.06 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = min(xs), max(xs)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(v):
        return px0 + (v - xlo) / (xhi - xlo) * (px1 - px0)

    def sy(v):
        return py0 - (v - ylo) / (yhi - ylo) * (py0 - py1)

    for t in _nice_ticks(ylo, yhi):
        cv.line(px0, sy(t), px1, sy(t), color="#ddd")
        cv._text(px0 - 8, sy(t) + 4, _fmt(t), anchor="end", size=11)
    for t in _nice_ticks(xlo, xhi):
        cv.line(sx(t), py0, sx(t), py0 + 4)
        label = _fmt(10**t) if logx else _fmt(t)
        cv._text(sx(t), py0 + 18, label, anchor="middle", size=11)
    cv.line(px0, py0, px1, py0)
    cv.line(px0, py0, px0, py1)

    for k, (label, ys) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(
            f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys) if math.isfinite(y)
        )
        el = ET.SubElement(cv.root, "polyline", points=pts, fill="none", stroke=color)
        el.set("stroke-width", "2")
        for x, y in zip(xs, ys):
            if math.isfinite(y):
                ET.SubElement(cv.root, "circle", cx=f"{sx(x):.1f}", cy=f"{sy(y):.1f}",
                              r="3", fill=color)
        cv._text(px1 - 8, py1 + 16 + 16 * k, label, anchor="end", size=12)
        cv.line(px1 - 70, py1 + 12 + 16 * k, px1 - 56, py1 + 12 + 16 * k,
                color=color, width=2)
    cv.save(path)


def bar_chart(path, labels, values, title="", xlabel="", ylabel=""):
    cv = _Canvas(title, xlabel, ylabel)
    px0, px1, py0, py1 = _plot_area()
    finite = [v for v in values if math.isfinite(v)]
    yhi = max(finite + [0.0]) * 1.08 or 1.0
    ylo = min(finite + [0.0])

    def sy(v):
        return py0 - (v - ylo) / (yhi - ylo) * (py0 - py1)

    for t in _nice_ticks(ylo, yhi):
        cv.line(px0, sy(t), px1, sy(t), color="#ddd")
        cv._text(px0 - 8, sy(t) + 4, _fmt(t), anchor="end", size=11)
    slot = (px1 - px0) / max(len(values), 1)
    for i, (lab, v) in enumerate(zip(labels, values)):
        cx = px0 + (i + 0.5) * slot
        if math.isfinite(v):
            top, base = sorted((sy(v), sy(max(ylo, 0.0))))
            ET.SubElement(
                cv.root, "rect", x=f"{cx - 0.3 * slot:.1f}", y=f"{top:.1f}",
                width=f"{0.6 * slot:.1f}", height=f"{max(base - top, 0.5):.1f}",
                fill=PALETTE[i % len(PALETTE)],
            )
        cv._text(cx, py0 + 18, str(lab), anchor="middle", size=11)
    cv.line(px0, py0, px1, py0)
    cv.line(px0, py0, px0, py1)
    cv.save(path)
