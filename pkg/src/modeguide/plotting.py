"""Dependency-free SVG figures: scatter plots and line charts.

Coordinates are written with a fixed number of decimals, so equal inputs
produce byte-identical files. For data with more than two dimensions the
scatter plot shows the first two coordinates.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .data import atomic_write_text
from .exceptions import PlotError

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH, HEIGHT, MARGIN = 640, 480, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")
MARKERS = ("circle", "square", "diamond", "triangle")


def _num(v):
    return f"{float(v):.3f}"


class _Frame:
    """Affine map from data bounds onto the drawing area (y axis up)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        pts = pts[np.isfinite(pts).all(axis=1)]
        if len(pts) == 0:
            pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = np.where(hi > lo, 0.05 * (hi - lo), 1.0)
        self.lo, self.hi = lo - pad, hi + pad

    def __call__(self, x, y):
        sx = MARGIN + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * (WIDTH - 2 * MARGIN)
        sy = HEIGHT - MARGIN - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * (HEIGHT - 2 * MARGIN)
        return sx, sy


def _svg(title):
    root = ET.Element("svg", {
        "xmlns": SVG_NS, "version": "1.1", "width": str(WIDTH), "height": str(HEIGHT),
        "viewBox": f"0 0 {WIDTH} {HEIGHT}",
    })
    ET.SubElement(root, "title").text = title
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": str(WIDTH),
                                 "height": str(HEIGHT), "fill": "white"})
    ET.SubElement(root, "text", {"x": str(WIDTH // 2), "y": "20", "text-anchor": "middle",
                                 "font-size": "14", "font-family": "sans-serif"}).text = title
    return root


def _axes(root, frame, xlabel, ylabel):
    g = ET.SubElement(root, "g", {"id": "axes", "stroke": "#444", "fill": "none"})
    x0, y0 = MARGIN, HEIGHT - MARGIN
    ET.SubElement(g, "line", {"x1": str(x0), "y1": str(y0), "x2": str(WIDTH - MARGIN), "y2": str(y0)})
    ET.SubElement(g, "line", {"x1": str(x0), "y1": str(y0), "x2": str(x0), "y2": str(MARGIN)})
    labels = ET.SubElement(root, "g", {"id": "axis-labels", "font-size": "11",
                                       "font-family": "sans-serif", "fill": "#222"})
    for frac in (0.0, 0.5, 1.0):
        xv = frame.lo[0] + frac * (frame.hi[0] - frame.lo[0])
        yv = frame.lo[1] + frac * (frame.hi[1] - frame.lo[1])
        sx, _ = frame(xv, frame.lo[1])
        _, sy = frame(frame.lo[0], yv)
        ET.SubElement(labels, "text", {"x": _num(sx), "y": str(y0 + 14),
                                       "text-anchor": "middle"}).text = f"{xv:.3g}"
        ET.SubElement(labels, "text", {"x": str(x0 - 4), "y": _num(sy),
                                       "text-anchor": "end"}).text = f"{yv:.3g}"
    ET.SubElement(labels, "text", {"x": str(WIDTH // 2), "y": str(HEIGHT - 10),
                                   "text-anchor": "middle"}).text = xlabel
    ET.SubElement(labels, "text", {"x": "12", "y": str(HEIGHT // 2), "text-anchor": "middle",
                                   "transform": f"rotate(-90 12 {HEIGHT // 2})"}).text = ylabel


def _marker(parent, kind, sx, sy, size, color, **extra):
    attrs = {"fill": color, **extra}
    if kind == "circle":
        attrs.update(cx=_num(sx), cy=_num(sy), r=_num(size))
        return ET.SubElement(parent, "circle", attrs)
    if kind == "square":
        attrs.update(x=_num(sx - size), y=_num(sy - size), width=_num(2 * size),
                     height=_num(2 * size))
        return ET.SubElement(parent, "rect", attrs)
    if kind == "diamond":
        pts = [(sx, sy - size), (sx + size, sy), (sx, sy + size), (sx - size, sy)]
    else:
        pts = [(sx, sy - size), (sx + size, sy + size), (sx - size, sy + size)]
    attrs["points"] = " ".join(f"{_num(a)},{_num(b)}" for a, b in pts)
    return ET.SubElement(parent, "polygon", attrs)


def _legend(root, entries):
    g = ET.SubElement(root, "g", {"id": "legend", "font-size": "11", "font-family": "sans-serif"})
    for i, (label, color) in enumerate(entries):
        y = MARGIN + 14 * i
        ET.SubElement(g, "rect", {"x": str(WIDTH - MARGIN - 110), "y": str(y - 8),
                                  "width": "8", "height": "8", "fill": color})
        ET.SubElement(g, "text", {"x": str(WIDTH - MARGIN - 98), "y": str(y)}).text = label


def _write(root, path):
    text = ET.tostring(root, encoding="unicode")
    text = '<?xml version="1.0" encoding="UTF-8"?>\n' + text + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text


def _as_2d(X, what):
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.empty((0, 2))
    X = np.atleast_2d(X)
    if X.shape[1] < 2:
        raise PlotError(f"{what} has dimension {X.shape[1]}; scatter plots need d >= 2")
    return X[:, :2]


def plot_scatter(path=None, reference=None, modes=None, distilled=None,
                 trajectories=None, title="distilled samples"):
    """Layered scatter plot.

    Parameters
    ----------
    path : path-like, optional
        Output file; the SVG text is returned either way.
    reference : tuple (X, y), optional
        Original data, drawn as small faint points coloured by class.
    modes : ndarray of shape (n, d), optional
        True mode centres, drawn as crosses.
    distilled : dict, optional
        Method name to ``(X, y)`` or a DistilledSet; one marker shape per method.
    trajectories : list of ndarray of shape (steps, d), optional
        Reverse-process paths, drawn as polylines with one vertex per step.

    Returns
    -------
    str
        The SVG document.
    """
    distilled = dict(distilled or {})
    layers = {}
    if reference is not None:
        X, y = reference
        layers["reference"] = (_as_2d(X, "reference"), np.asarray(y).reshape(-1))
    mode_pts = _as_2d(modes, "modes") if modes is not None else np.empty((0, 2))
    sets = {}
    for name, ds in distilled.items():
        X, y = (ds.X, ds.y) if hasattr(ds, "X") else ds
        sets[name] = (_as_2d(X, f"distilled set {name!r}"), np.asarray(y).reshape(-1))
    paths = [_as_2d(p, "trajectory") for p in (trajectories or [])]
    if not layers and not sets and not paths and len(mode_pts) == 0:
        raise PlotError("nothing to plot")
    allpts = [mode_pts] + [v[0] for v in layers.values()] + [v[0] for v in sets.values()] + paths
    frame = _Frame(np.concatenate(allpts))
    classes = sorted({int(c) for _, y in list(layers.values()) + list(sets.values()) for c in y})
    color = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}

    root = _svg(title)
    _axes(root, frame, "x0", "x1")
    if "reference" in layers:
        g = ET.SubElement(root, "g", {"id": "reference", "opacity": "0.25"})
        X, y = layers["reference"]
        for (a, b), c in zip(X, y):
            _marker(g, "circle", *frame(a, b), 1.5, color[int(c)])
    g = ET.SubElement(root, "g", {"id": "trajectories", "fill": "none",
                                  "stroke": "#555", "stroke-width": "0.8", "opacity": "0.7"})
    for p in paths:
        pts = " ".join(f"{_num(sx)},{_num(sy)}" for sx, sy in (frame(a, b) for a, b in p))
        ET.SubElement(g, "polyline", {"points": pts})
    g = ET.SubElement(root, "g", {"id": "modes", "stroke": "black", "stroke-width": "1.5"})
    for a, b in mode_pts:
        sx, sy = frame(a, b)
        ET.SubElement(g, "path", {"d": f"M{_num(sx - 5)},{_num(sy - 5)} L{_num(sx + 5)},{_num(sy + 5)} "
                                       f"M{_num(sx - 5)},{_num(sy + 5)} L{_num(sx + 5)},{_num(sy - 5)}"})
    legend = []
    for i, (name, (X, y)) in enumerate(sets.items()):
        kind = MARKERS[i % len(MARKERS)]
        g = ET.SubElement(root, "g", {"id": f"distilled-{i}", "class": "distilled",
                                      "data-method": str(name), "stroke": "black",
                                      "stroke-width": "0.6"})
        for (a, b), c in zip(X, y):
            _marker(g, kind, *frame(a, b), 4.0, color[int(c)])
        legend.append((f"{name} ({kind})", "#333"))
    legend += [(f"class {c}", color[c]) for c in classes]
    _legend(root, legend)
    return _write(root, path)


def plot_lines(path=None, x=(), series=None, xlabel="", ylabel="", title=""):
    """Line chart of one or more series sharing the x values."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    series = {k: np.asarray(v, dtype=np.float64).reshape(-1) for k, v in (series or {}).items()}
    if len(x) == 0 or not series:
        raise PlotError("line chart needs x values and at least one series")
    for name, v in series.items():
        if len(v) != len(x):
            raise PlotError(f"series {name!r} has {len(v)} points, expected {len(x)}")
    pts = np.concatenate([np.column_stack([x, v]) for v in series.values()])
    frame = _Frame(pts)
    root = _svg(title)
    _axes(root, frame, xlabel, ylabel)
    legend = []
    for i, (name, v) in enumerate(series.items()):
        col = PALETTE[i % len(PALETTE)]
        g = ET.SubElement(root, "g", {"id": f"series-{i}", "data-name": name})
        xy = [frame(a, b) for a, b in zip(x, v) if np.isfinite(b)]
        ET.SubElement(g, "polyline", {"points": " ".join(f"{_num(a)},{_num(b)}" for a, b in xy),
                                      "fill": "none", "stroke": col, "stroke-width": "1.5"})
        for a, b in xy:
            _marker(g, "circle", a, b, 2.5, col)
        legend.append((name, col))
    _legend(root, legend)
    return _write(root, path)


def plot_sweep(path, result, columns=("accuracy", "diversity")):
    """One chart per sweep with each requested column rescaled to [0, 1].

    Rescaling lets metrics of different units share an axis; the raw
    numbers live in the sweep CSV.
    """
    series = {}
    for name in columns:
        v = result.column(name)
        span = np.ptp(v)
        series[name] = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    return plot_lines(path, result.values, series, xlabel=result.parameter,
                      ylabel="rescaled metric", title=f"{result.parameter} sweep")
