"""Polygon and star-shape primitives.

Angles about a star center are measured from a reference ray that runs
from the center through the first vertex; that choice makes every sector
quantity deterministic.  All sector areas are sums of exact triangle areas,
so no quadrature is involved anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ValidationError

TWO_PI = 2.0 * math.pi


def cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def _segments_cross(p1, p2, q1, q2, eps):
    d1 = cross(p2 - p1, q1 - p1)
    d2 = cross(p2 - p1, q2 - p1)
    d3 = cross(q2 - q1, p1 - q1)
    d4 = cross(q2 - q1, p2 - q1)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    return False


def is_simple(vertices, eps=1e-12) -> bool:
    """O(n^2) check that no two non-adjacent edges meet."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n < 3:
        return False
    scale = max(1.0, float(np.ptp(v, axis=0).max()))
    tol = eps * scale * scale
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = v[j], v[(j + 1) % n]
            if _segments_cross(a, b, c, d, tol):
                return False
            # touching configurations: a vertex lying on a non-adjacent edge
            for p, (s0, s1) in ((c, (a, b)), (d, (a, b)), (a, (c, d)), (b, (c, d))):
                if _point_on_segment(p, s0, s1, tol):
                    return False
    return True


def _point_on_segment(p, a, b, tol):
    ab = b - a
    if abs(cross(ab, p - a)) > tol:
        return False
    t = np.dot(p - a, ab)
    return 0.0 <= t <= np.dot(ab, ab)


def merge_collinear(vertices, eps=1e-12):
    """Drop vertices whose neighbours are collinear with them (and duplicates)."""
    v = [np.asarray(p, dtype=float) for p in vertices]
    scale = max(1.0, max(float(np.abs(p).max()) for p in v))
    changed = True
    while changed and len(v) > 3:
        changed = False
        n = len(v)
        for i in range(n):
            a, b, c = v[i - 1], v[i], v[(i + 1) % n]
            if np.allclose(a, b, atol=eps * scale) or abs(cross(b - a, c - b)) <= eps * scale * scale * 10:
                del v[i]
                changed = True
                break
    return np.array(v)


def point_in_polygon(vertices, pts) -> np.ndarray:
    """Even-odd containment for an array of points (boundary points are unspecified)."""
    v = np.asarray(vertices, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        straddle = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddle & (x < xc)
    return inside


def distance_to_boundary(vertices, pts) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    best = np.full(len(pts), np.inf)
    w = np.roll(v, -1, axis=0)
    for a, b in zip(v, w):
        ab = b - a
        t = np.clip(((pts - a) @ ab) / float(ab @ ab), 0.0, 1.0)
        d = np.hypot(*(pts - (a + t[:, None] * ab)).T)
        best = np.minimum(best, d)
    return best


def segment_in_polygon(vertices, p, x, eps=1e-12) -> bool:
    """True when the closed segment p-x stays inside the closed polygon."""
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    scale = max(1.0, float(np.ptp(v, axis=0).max()))
    tol = eps * scale * scale
    n = len(v)
    for i in range(n):
        if _segments_cross(p, x, v[i], v[(i + 1) % n], tol):
            return False
    # the segment may still leave through a vertex; test points between all crossings
    ts = [0.0, 1.0]
    d = x - p
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        den = cross(d, b - a)
        if abs(den) > tol:
            t = cross(a - p, b - a) / den
            if 0.0 < t < 1.0:
                ts.append(float(t))
    ts = np.sort(np.array(ts))
    mids = p + ((ts[:-1] + ts[1:]) / 2.0)[:, None] * d
    mids = mids[np.diff(ts) > 1e-14]
    if len(mids) == 0:
        return True
    inside = point_in_polygon(v, mids)
    near = distance_to_boundary(v, mids) <= 1e-9 * scale
    return bool(np.all(inside | near))


@dataclass(frozen=True, eq=False)
class StarPolygon:
    """Polygon (counterclockwise) together with a point that sees all of it.

    The center must lie in the open kernel: strictly on the inner side of
    every edge line.  That makes vertex angles strictly increasing and the
    boundary radius single-valued and continuous.
    """

    vertices: np.ndarray
    center: np.ndarray
    rel: np.ndarray = field(init=False, repr=False)
    ref_angle: float = field(init=False)
    angle_breaks: np.ndarray = field(init=False, repr=False)
    tri_areas: np.ndarray = field(init=False, repr=False)
    cum_areas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        c = np.asarray(self.center, dtype=float).reshape(2)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValidationError("polygon needs at least three 2-d vertices")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(c))):
            raise ValidationError("non-finite coordinates")
        v = merge_collinear(v)
        if signed_area(v) < 0:
            # keep the first vertex first: it fixes the reference ray
            v = np.roll(v[::-1], 1, axis=0).copy()
        if not is_simple(v):
            raise ValidationError("polygon is not simple")
        if signed_area(v) <= 0:
            raise ValidationError("polygon has non-positive area")
        margins = _edge_margins(v, c)
        if np.min(margins) <= 1e-12 * max(1.0, float(np.ptp(v, axis=0).max())):
            raise ValidationError(
                "center %s does not lie in the open kernel (min edge margin %.3g)"
                % (c.tolist(), float(np.min(margins)))
            )
        rel = v - c
        ref = math.atan2(rel[0, 1], rel[0, 0])
        ang = np.arctan2(rel[:, 1], rel[:, 0]) - ref
        ang = np.mod(ang, TWO_PI)
        ang[0] = 0.0
        breaks = np.append(ang, TWO_PI)
        if np.any(np.diff(breaks) <= 0):
            raise ValidationError("vertex angles about the center are not increasing")
        nxt = np.roll(rel, -1, axis=0)
        tri = 0.5 * cross(rel, nxt)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "rel", rel)
        object.__setattr__(self, "ref_angle", ref)
        object.__setattr__(self, "angle_breaks", breaks)
        object.__setattr__(self, "tri_areas", tri)
        object.__setattr__(self, "cum_areas", np.concatenate([[0.0], np.cumsum(tri)]))
        for arr in (v, c, rel, breaks, tri):
            arr.setflags(write=False)

    @property
    def area(self) -> float:
        return float(self.cum_areas[-1])

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.hypot(*(v[:, None, :] - v[None, :, :]).transpose(2, 0, 1))))

    @property
    def inradius(self) -> float:
        """Distance from the center to the boundary."""
        return float(distance_to_boundary(self.vertices, self.center[None])[0])

    def recentered(self, center) -> "StarPolygon":
        return StarPolygon(self.vertices, center)

    def transformed(self, matrix, offset) -> "StarPolygon":
        m = np.asarray(matrix, dtype=float)
        return StarPolygon(self.vertices @ m.T + offset, m @ self.center + offset)

    # -- angular structure ------------------------------------------------

    def _edge_index(self, beta):
        k = np.searchsorted(self.angle_breaks, beta, side="right") - 1
        return np.clip(k, 0, self.n - 1)

    def relative_angle(self, pts):
        d = np.atleast_2d(pts) - self.center
        return np.mod(np.arctan2(d[:, 1], d[:, 0]) - self.ref_angle, TWO_PI)

    def radius_at(self, beta):
        """Boundary distance along the ray at relative angle beta."""
        beta = np.asarray(beta, dtype=float)
        k = self._edge_index(beta)
        ang = self.ref_angle + beta
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        a = self.rel[k]
        e = self.rel[(k + 1) % self.n] - a
        return cross(a, e) / cross(u, e)

    def elevation(self, pts):
        """Gauge |y - p| / R(angle): 1 on the boundary, 0 at the center."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        r = np.hypot(d[:, 0], d[:, 1])
        beta = self.relative_angle(pts)
        k = self._edge_index(beta)
        a = self.rel[k]
        e = self.rel[(k + 1) % self.n] - a
        # inside sector k the gauge is linear: cross(d, e) / cross(a, e)
        s = cross(d, e) / cross(a, e)
        return np.where(r == 0.0, 0.0, s)

    def contains(self, pts, tol=1e-12):
        return self.elevation(pts) <= 1.0 + tol


def _edge_margins(v, p):
    w = np.roll(v, -1, axis=0)
    e = w - v
    return cross(e, p - v) / np.hypot(e[:, 0], e[:, 1])


# -- operations --------------------------------------------------------------


def polygon_area(poly) -> float:
    if isinstance(poly, StarPolygon):
        return poly.area
    v = np.asarray(poly, dtype=float)
    if not is_simple(v):
        raise ValidationError("polygon is not simple")
    return abs(signed_area(v))


def kernel_margin(vertices, p) -> float:
    """Smallest signed distance from p to the edge lines (positive inside the kernel)."""
    v = np.asarray(vertices, dtype=float)
    if signed_area(v) < 0:
        v = v[::-1]
    return float(np.min(_edge_margins(v, np.asarray(p, dtype=float))))


def is_star_center(poly, p, eps=1e-12) -> bool:
    """Kernel test: p sees the whole polygon iff it is inside every edge half-plane."""
    v = np.asarray(poly.vertices if isinstance(poly, StarPolygon) else poly, dtype=float)
    p = np.asarray(p, dtype=float)
    scale = max(1.0, float(np.ptp(v, axis=0).max()))
    if distance_to_boundary(v, p[None])[0] <= eps * scale:
        raise GeometryError("point lies on the polygon boundary")
    if not point_in_polygon(v, p[None])[0]:
        return False
    return kernel_margin(v, p) > eps * scale


def boundary_radius(poly: StarPolygon, alpha):
    """Distance from the center to the boundary in absolute direction alpha."""
    beta = np.mod(np.asarray(alpha, dtype=float) - poly.ref_angle, TWO_PI)
    return poly.radius_at(beta)


def sector_area(poly: StarPolygon, eta):
    """Area swept from the reference ray to relative angle eta (0 <= eta <= 2 pi)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < -1e-15) or np.any(eta > TWO_PI + 1e-12):
        raise GeometryError("eta outside [0, 2 pi]")
    eta = np.clip(eta, 0.0, TWO_PI)
    k = poly._edge_index(eta)
    R = poly.radius_at(eta)
    ang = poly.ref_angle + eta
    x = np.stack([R * np.cos(ang), R * np.sin(ang)], axis=-1)
    out = poly.cum_areas[k] + np.maximum(0.5 * cross(poly.rel[k], x), 0.0)
    out = np.where(eta == 0.0, 0.0, out)
    return out if out.ndim else float(out)


def sector_point(poly: StarPolygon, target):
    """Boundary point (relative to the center) closing a sector of the given area.

    Along an edge the swept area is linear in the edge parameter, so the
    inversion is closed form.
    """
    target = np.asarray(target, dtype=float)
    k = np.searchsorted(poly.cum_areas, target, side="right") - 1
    k = np.clip(k, 0, poly.n - 1)
    t = (target - poly.cum_areas[k]) / poly.tri_areas[k]
    a = poly.rel[k]
    b = poly.rel[(k + 1) % poly.n]
    return k, a + t[..., None] * (b - a)


def solve_eta(poly: StarPolygon, target_area):
    target = np.asarray(target_area, dtype=float)
    tol = 1e-12 * poly.area
    if np.any(target < -tol) or np.any(target > poly.area + tol):
        raise GeometryError("target area outside [0, |T|]")
    target = np.clip(target, 0.0, poly.area)
    k, x = sector_point(poly, target)
    a = poly.rel[k]
    eta = poly.angle_breaks[k] + np.arctan2(cross(a, x), np.sum(a * x, axis=-1))
    return eta if eta.ndim else float(eta)


def contract(poly: StarPolygon, r: float) -> StarPolygon:
    if not 0.0 < r < 1.0:
        raise GeometryError("contraction ratio must lie in (0, 1)")
    return StarPolygon(poly.center + r * (poly.vertices - poly.center), poly.center)


def boundary_samples(vertices, count: int) -> np.ndarray:
    """Points spread along the boundary proportionally to edge length."""
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    lengths = np.hypot(*(w - v).T)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = np.linspace(0.0, cum[-1], count, endpoint=False)
    k = np.searchsorted(cum, s, side="right") - 1
    t = (s - cum[k]) / lengths[k]
    return v[k] + t[:, None] * (w[k] - v[k])


def regular_polygon(n: int, circumradius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0):
    ang = phase + TWO_PI * np.arange(n) / n
    c = np.asarray(center, dtype=float)
    return StarPolygon(c + circumradius * np.stack([np.cos(ang), np.sin(ang)], axis=1), c)


def min_elevation_over(poly: StarPolygon, other_vertices) -> float:
    """Minimum of poly's elevation gauge over a polygon not containing poly.center.

    The gauge is linear inside each angular sector of poly, so along every
    edge of the other polygon the minimum sits at an endpoint or where the
    edge crosses one of poly's vertex rays.
    """
    v = np.asarray(other_vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    pts = [v]
    for a in poly.rel:
        # ray center + t*a, t > 0, against each segment
        d = w - v
        den = cross(d, np.broadcast_to(a, d.shape))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = cross(poly.center - v, np.broadcast_to(a, d.shape)) / den
            t = cross(poly.center - v, d) / den
        ok = (np.abs(den) > 1e-300) & (s >= 0) & (s <= 1) & (t > 0)
        pts.append(v[ok] + s[ok, None] * d[ok])
    pts = np.concatenate(pts)
    return float(np.min(poly.elevation(pts)))


@dataclass
class WitnessResult:
    q: np.ndarray
    r_used: float
    clearance: float
    candidates_tried: int
    visibility_samples: int


def find_witness_point(T: StarPolygon, parts, r: float = 0.6, r_min: float = 1e-3, grid: int = 21,
                       samples: int = 1000) -> WitnessResult:
    """Point q inside T, outside every contracted part, that sees all contracted parts.

    Candidates are restricted to the open kernel of T, so q sees all of T and
    the region visible from q is T itself.  The candidate disk grows from
    0.2 * inradius; the contraction ratio shrinks by 0.8 when a whole pass
    fails.  Among valid candidates the one farthest from the contracted parts
    wins, which leaves the most room for a hole around q.
    """
    parts = list(parts)
    scale = T.diameter
    base = T.inradius
    tried = 0
    r_try = float(r)
    while r_try >= r_min:
        shrunk = [contract(p, r_try) for p in parts]
        best = None
        for frac in (0.2, 0.4, 0.8):
            delta = frac * base
            g = np.linspace(-delta, delta, grid)
            cand = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
            cand = cand[np.hypot(cand[:, 0], cand[:, 1]) <= delta] + T.center
            tried += len(cand)
            kern = np.array([kernel_margin(T.vertices, c) for c in cand])
            cand, kern = cand[kern > 1e-6 * scale], kern[kern > 1e-6 * scale]
            if len(cand) == 0:
                continue
            outside = np.ones(len(cand), dtype=bool)
            clear = np.full(len(cand), np.inf)
            for sp in shrunk:
                inside = sp.contains(cand, tol=0.0)
                outside &= ~inside
                clear = np.minimum(clear, distance_to_boundary(sp.vertices, cand))
            clear = np.minimum(clear, kern)
            ok = outside & (clear > 1e-6 * scale)
            if np.any(ok):
                i = int(np.argmax(np.where(ok, clear, -np.inf)))
                if best is None or clear[i] > best[1]:
                    best = (cand[i], float(clear[i]))
        if best is not None:
            q = best[0]
            # sampled confirmation through T (exact by kernel membership)
            n_vis = 0
            for sp in shrunk:
                pts = boundary_samples(sp.vertices, max(8, samples // max(1, len(shrunk))))
                for x in pts:
                    if not segment_in_polygon(T.vertices, q, x):
                        raise GeometryError("witness point fails visibility confirmation")
                n_vis += len(pts)
            return WitnessResult(q=q, r_used=r_try, clearance=best[1], candidates_tried=tried,
                                 visibility_samples=n_vis)
        r_try *= 0.8
    raise GeometryError(
        "no witness point found down to r=%.3g after %d candidates (inradius %.3g)" % (r_min, tried, base)
    )
