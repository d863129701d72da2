"""Small hand-rolled SVG writer for run artifacts (no charting dependency)."""

import numpy as np

from .world import CORAL, ROCK

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(v):
    return f"{v:.2f}"


class SvgCanvas:
    def __init__(self, width=640, height=480):
        self.width = width
        self.height = height
        self.parts = []

    def rect(self, x, y, w, h, fill, opacity=1.0):
        self.parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
                          f'height="{_fmt(h)}" fill="{fill}" fill-opacity="{opacity}"/>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0):
        self.parts.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
                          f'y2="{_fmt(y2)}" stroke="{stroke}" stroke-width="{width}"/>')

    def polyline(self, pts, stroke, width=1.5):
        path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{path}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"/>')

    def circle(self, x, y, r, fill):
        self.parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{fill}"/>')

    def text(self, x, y, s, size=12, anchor="start", fill="#000"):
        self.parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{fill}" '
                          f'font-family="sans-serif">{s}</text>')

    def save(self, path):
        body = "\n".join(self.parts)
        with open(path, "w") as fh:
            fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                     f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                     f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def line_plot(path, series, title="", xlabel="", ylabel=""):
    """series: iterable of (label, xs, ys). Draws axes, ticks, and a legend."""
    canvas = SvgCanvas()
    ml, mr, mt, mb = 60, 20, 40, 50
    pw, ph = canvas.width - ml - mr, canvas.height - mt - mb
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series if len(s[1])])
    ys_all = np.concatenate([np.asarray(s[2], dtype=float) for s in series if len(s[2])])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    canvas.line(ml, mt + ph, ml + pw, mt + ph)
    canvas.line(ml, mt, ml, mt + ph)
    for i in range(5):
        xt = x0 + i * (x1 - x0) / 4
        yt = y0 + i * (y1 - y0) / 4
        canvas.line(sx(xt), mt + ph, sx(xt), mt + ph + 4)
        canvas.text(sx(xt), mt + ph + 18, f"{xt:.3g}", size=10, anchor="middle")
        canvas.line(ml - 4, sy(yt), ml, sy(yt))
        canvas.text(ml - 8, sy(yt) + 4, f"{yt:.3g}", size=10, anchor="end")
    canvas.text(ml + pw / 2, canvas.height - 12, xlabel, anchor="middle")
    canvas.text(ml + pw / 2, 20, title, size=14, anchor="middle")
    canvas.text(14, mt - 10, ylabel, size=11)

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(sx(float(x)), sy(float(y))) for x, y in zip(xs, ys)]
        if pts:
            canvas.polyline(pts, color)
        canvas.rect(ml + pw - 150, mt + 8 + 16 * i, 12, 4, color)
        canvas.text(ml + pw - 132, mt + 14 + 16 * i, label, size=11)
    canvas.save(path)


def world_overlay(path, world, tracks, waypoints=None, title=""):
    """Top view: coral/rock cells plus trajectory overlays.

    tracks: iterable of (label, (N, 2) xy arrays)."""
    canvas = SvgCanvas(width=560, height=560)
    m = 30
    ex, ey = world.extent
    scale = min((canvas.width - 2 * m) / ex, (canvas.height - 2 * m) / ey)

    def sx(x):
        return m + x * scale

    def sy(y):
        return canvas.height - m - y * scale

    cs = world.params.cell_size
    ny, nx = world.surface_class.shape
    for iy in range(ny):
        for ix in range(nx):
            c = world.surface_class[iy, ix]
            if c == CORAL:
                canvas.rect(sx(ix * cs), sy((iy + 1) * cs), cs * scale, cs * scale,
                            "#f4a6b8", opacity=0.8)
            elif c == ROCK:
                canvas.rect(sx(ix * cs), sy((iy + 1) * cs), cs * scale, cs * scale,
                            "#555555", opacity=0.9)
    canvas.rect(sx(0), sy(ey), ex * scale, ey * scale, "none")
    canvas.parts.append(f'<rect x="{_fmt(sx(0))}" y="{_fmt(sy(ey))}" width="{_fmt(ex * scale)}" '
                        f'height="{_fmt(ey * scale)}" fill="none" stroke="#000"/>')

    for i, (label, xy) in enumerate(tracks):
        color = PALETTE[i % len(PALETTE)]
        xy = np.asarray(xy)
        if len(xy):
            canvas.polyline([(sx(p[0]), sy(p[1])) for p in xy], color, width=2.0)
        canvas.rect(m + 8, 12 + 16 * i, 12, 4, color)
        canvas.text(m + 26, 18 + 16 * i, label, size=11)
    if waypoints is not None:
        for wp in np.atleast_2d(waypoints):
            canvas.circle(sx(wp[0]), sy(wp[1]), 4, "#000")
    if title:
        canvas.text(canvas.width / 2, 18, title, size=13, anchor="middle")
    canvas.save(path)
