"""Minimal SVG output: tiles as paths, optional polyline overlays."""
from __future__ import annotations

from xml.sax.saxutils import quoteattr

import numpy as np

PALETTE = ["#e8c170", "#7aa6c2", "#b5d99c", "#d98c8c", "#b39ddb", "#f2d7a6", "#9fd3c7", "#cccccc"]


def _fmt(x: float) -> str:
    return ("%.6f" % x).rstrip("0").rstrip(".")


def _path(poly) -> str:
    pts = np.asarray(poly)
    return "M " + " L ".join("%s %s" % (_fmt(x), _fmt(-y)) for x, y in pts) + " Z"


def _polyline(pts) -> str:
    return " ".join("%s,%s" % (_fmt(x), _fmt(-y)) for x, y in np.asarray(pts))


def render_svg(polygons, types=None, overlays=(), points=None, width: int = 800, stroke: float | None = None,
               title: str = "") -> str:
    """SVG document with one <path> per polygon, filled by type, plus overlay polylines and dots.

    The y axis is flipped so the picture matches the usual math orientation.
    """
    polys = [np.asarray(p, dtype=float) for p in polygons]
    pieces = polys + [np.asarray(o, dtype=float) for o in overlays]
    if points is not None and len(points):
        pieces.append(np.asarray(points, dtype=float))
    if not pieces:
        raise ValueError("nothing to render")
    allp = np.concatenate(pieces)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    pad = 0.02 * span
    w = hi[0] - lo[0] + 2 * pad
    h = hi[1] - lo[1] + 2 * pad
    sw = stroke if stroke is not None else span / 800.0
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" viewBox="%s %s %s %s">'
           % (width, max(1, int(round(width * h / w))), _fmt(lo[0] - pad), _fmt(-hi[1] - pad), _fmt(w), _fmt(h))]
    if title:
        out.append("<title>%s</title>" % title.replace("&", "&amp;").replace("<", "&lt;"))
    out.append('<g stroke="#333" stroke-width=%s stroke-linejoin="round">' % quoteattr(_fmt(sw)))
    for i, p in enumerate(polys):
        t = 0 if types is None else int(types[i])
        out.append('<path d="%s" fill="%s"/>' % (_path(p), PALETTE[t % len(PALETTE)]))
    out.append("</g>")
    if overlays:
        out.append('<g fill="none" stroke="#c0392b" stroke-width=%s>' % quoteattr(_fmt(sw * 0.6)))
        for o in overlays:
            out.append('<polyline points="%s"/>' % _polyline(o))
        out.append("</g>")
    if points is not None and len(points):
        out.append('<g fill="#222">')
        for x, y in np.asarray(points):
            out.append('<circle cx="%s" cy="%s" r="%s"/>' % (_fmt(x), _fmt(-y), _fmt(sw * 2)))
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grid_lines(lo, hi, n: int = 16, samples: int = 64):
    """Axis-parallel grid lines over a box, each as a dense polyline (for deforming under a map)."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    t = np.linspace(0.0, 1.0, samples)
    lines = []
    for a in np.linspace(0.0, 1.0, n + 1):
        x = lo[0] + a * (hi[0] - lo[0])
        lines.append(np.stack([np.full_like(t, x), lo[1] + t * (hi[1] - lo[1])], axis=1))
        y = lo[1] + a * (hi[1] - lo[1])
        lines.append(np.stack([lo[0] + t * (hi[0] - lo[0]), np.full_like(t, y)], axis=1))
    return lines


def polar_grid(n_radii: int = 8, n_angles: int = 32, samples: int = 128):
    """Circles and spokes of the unit disk as polylines."""
    t = np.linspace(0.0, 2 * np.pi, samples)
    lines = [np.stack([r * np.cos(t), r * np.sin(t)], axis=1) for r in np.linspace(0, 1, n_radii + 1)[1:]]
    s = np.linspace(0.0, 1.0, samples // 2)
    for a in np.linspace(0, 2 * np.pi, n_angles, endpoint=False):
        lines.append(np.stack([s * np.cos(a), s * np.sin(a)], axis=1))
    return lines
