"""Static SVG line charts.

Each series is drawn as a ``<polyline>`` whose ``points`` are the raw data
values; a group transform maps data space to the canvas. Charts can be read
back with :func:`read_series`.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Sequence

from .core import Strategy
from .harness import (REGRESSOR_ORDER, STRATEGY_ORDER, EfficiencyReport, MissingCells, as_rows,
                      learning_curve)

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=150, top=40, bottom=55)
COLORS = {"UBD": "#1f77b4", "URBD": "#ff7f0e", "BBD": "#2ca02c",
          "UBD/BBD": "#1f77b4", "URBD/BBD": "#ff7f0e"}
SVG_NS = "http://www.w3.org/2000/svg"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_chart(series: dict[str, tuple[Sequence[float], Sequence[float]]], path, title: str,
               xlabel: str, ylabel: str, markers_only: Sequence[str] = ()) -> Path:
    """Write an SVG chart; NaN values are dropped from their polyline."""
    clean = {}
    for name, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        clean[name] = pts
    allx = [p[0] for pts in clean.values() for p in pts] or [0.0, 1.0]
    ally = [p[1] for pts in clean.values() for p in pts] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    sx, sy = pw / (x1 - x0), ph / (y1 - y0)
    tx, ty = MARGIN["left"] - x0 * sx, MARGIN["top"] + y1 * sy

    def px(x):
        return tx + x * sx

    def py(y):
        return ty - y * sy

    svg = ET.Element("svg", xmlns=SVG_NS, width=str(WIDTH), height=str(HEIGHT),
                     viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    ET.SubElement(svg, "text", {"text-anchor": "middle", "font-size": "15"}, x=str(WIDTH / 2), y="22").text = title
    axes = ET.SubElement(svg, "g", stroke="black", fill="none")
    ET.SubElement(axes, "rect", x=str(MARGIN["left"]), y=str(MARGIN["top"]), width=str(pw), height=str(ph))
    labels = ET.SubElement(svg, "g", {"font-size": "11", "font-family": "sans-serif"})
    for t in _ticks(x0, x1):
        ET.SubElement(axes, "line", x1=f"{px(t):.2f}", x2=f"{px(t):.2f}", y1=str(MARGIN["top"] + ph),
                      y2=str(MARGIN["top"] + ph + 5))
        ET.SubElement(labels, "text", x=f"{px(t):.2f}", y=str(MARGIN["top"] + ph + 18),
                      **{"text-anchor": "middle"}).text = f"{t:g}"
    for t in _ticks(y0, y1):
        ET.SubElement(axes, "line", x1=str(MARGIN["left"] - 5), x2=str(MARGIN["left"]), y1=f"{py(t):.2f}",
                      y2=f"{py(t):.2f}")
        ET.SubElement(labels, "text", x=str(MARGIN["left"] - 8), y=f"{py(t) + 4:.2f}",
                      **{"text-anchor": "end"}).text = f"{t:.4g}"
    ET.SubElement(labels, "text", x=str(MARGIN["left"] + pw / 2), y=str(HEIGHT - 12),
                  **{"text-anchor": "middle"}).text = xlabel
    ET.SubElement(labels, "text", x="16", y=str(MARGIN["top"] + ph / 2),
                  transform=f"rotate(-90 16 {MARGIN['top'] + ph / 2})", **{"text-anchor": "middle"}).text = ylabel

    data = ET.SubElement(svg, "g", {"class": "data", "transform": f"matrix({_fmt(sx)} 0 0 {_fmt(-sy)} {_fmt(tx)} {_fmt(ty)})"})
    for i, (name, pts) in enumerate(clean.items()):
        color = COLORS.get(name, ["#d62728", "#9467bd", "#8c564b"][i % 3])
        pts_attr = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        style = {"data-series": name, "points": pts_attr, "fill": "none", "stroke": color,
                 "stroke-width": "2", "vector-effect": "non-scaling-stroke"}
        if name in markers_only:
            style.update({"stroke-width": "8", "stroke-linecap": "round", "stroke-dasharray": "0 1e9"})
        ET.SubElement(data, "polyline", style)
        ly = MARGIN["top"] + 18 * (i + 1)
        lx = WIDTH - MARGIN["right"] + 12
        ET.SubElement(svg, "line", x1=str(lx), x2=str(lx + 20), y1=str(ly), y2=str(ly), stroke=color,
                      **{"stroke-width": "2"})
        ET.SubElement(labels, "text", x=str(lx + 26), y=str(ly + 4)).text = name

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
    return path


def read_series(path) -> dict[str, list[tuple[float, float]]]:
    """Parse back ``{series name: [(x, y), ...]}`` from a chart written here."""
    root = ET.parse(path).getroot()
    out = {}
    for el in root.iter(f"{{{SVG_NS}}}polyline"):
        pts = el.get("points", "").split()
        out[el.get("data-series")] = [tuple(float(v) for v in p.split(",")) for p in pts]
    return out


METRICS = {"r2": ("r2_mean", "mean R^2"), "mse": ("mse_mean", "mean MSE")}


def emit_plots(results, outdir, efficiency: Sequence[EfficiencyReport] = (), suffix: str = "") -> list[Path]:
    """Learning-curve charts per (metric, regressor) plus an efficiency-vs-dimension chart."""
    rows = as_rows(results)
    strategies = [s for s in STRATEGY_ORDER if any(r.strategy is s for r in rows)]
    if not strategies:
        log.warning("no strategies in results; no charts written")
        return []
    outdir = Path(outdir)
    written = []
    for kind in REGRESSOR_ORDER:
        if not any(r.regressor is kind for r in rows):
            continue
        for key, (metric, label) in METRICS.items():
            series = {}
            for s in strategies:
                try:
                    c = learning_curve(rows, s, kind, metric)
                except MissingCells as exc:
                    log.warning("%s", exc)
                    continue
                series[s.value] = (c.sizes, c.mean)
            written.append(line_chart(series, outdir / f"{key}_{kind.value}{suffix}.svg",
                                      f"{label} vs training size ({kind.value})", "training points", label))
    if efficiency:
        written.append(efficiency_chart(efficiency, outdir / "efficiency.svg"))
    return written


def efficiency_chart(reports: Sequence[EfficiencyReport], path) -> Path:
    reports = sorted(reports, key=lambda r: r.dimension)
    series: dict[str, tuple[list, list]] = {}
    for base in (Strategy.UBD, Strategy.URBD):
        name = f"{base.value}/BBD"
        xs = [r.dimension for r in reports if r.ratios[base].value is not None]
        ys = [r.ratios[base].value for r in reports if r.ratios[base].value is not None]
        series[name] = (xs, ys)
        lb = [(r.dimension, r.ratios[base].lower_bound) for r in reports if r.ratios[base].lower_bound is not None]
        if lb:
            series[f"{name} lower bound"] = ([p[0] for p in lb], [p[1] for p in lb])
    target = reports[0].target if reports else float("nan")
    return line_chart(series, path, f"relative efficiency at R^2 >= {target:g}", "dimension",
                      "N baseline / N BBD", markers_only=[k for k in series if k.endswith("lower bound")])
