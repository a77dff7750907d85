"""The sector-preserving map H from the unit disk onto a star polygon.

H(r cos t, r sin t) = center + r * X(t), where X(t) is the boundary point
(relative to the center) that closes a sector of area (t / 2pi) * |T|.
Both directions are closed form because the swept area is linear in the
edge parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .geometry import TWO_PI, StarPolygon, cross, sector_point
from .maps import Layer, PlaneMap


@dataclass(frozen=True, eq=False)
class ElevationMap:
    domain: StarPolygon

    @property
    def normalization(self) -> float:
        """Constant Jacobian of H."""
        return self.domain.area / math.pi

    @property
    def disk_break_angles(self) -> np.ndarray:
        """Disk angles whose rays H sends onto vertex rays (where H is not differentiable)."""
        return TWO_PI * self.domain.cum_areas[:-1] / self.domain.area


def build_elevation_map(T: StarPolygon) -> ElevationMap:
    if not isinstance(T, StarPolygon):
        raise ValidationError("elevation map needs a StarPolygon")
    return ElevationMap(T)


def eval_H(em: ElevationMap, x, tol: float = 1e-12):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r > 1.0 + tol):
        raise DomainError("point outside the closed unit disk")
    T = em.domain
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), TWO_PI)
    _, X = sector_point(T, theta / TWO_PI * T.area)
    out = T.center + r[:, None] * X
    out[r < 1e-9] = T.center
    return out


def disk_coords(em: ElevationMap, y):
    """(elevation, disk angle) of points of the plane; no domain check."""
    T = em.domain
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = y - T.center
    beta = T.relative_angle(y)
    k = T._edge_index(beta)
    a = T.rel[k]
    e = T.rel[(k + 1) % T.n] - a
    s = cross(d, e) / cross(a, e)
    R = T.radius_at(beta)
    ang = T.ref_angle + beta
    X = R[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    theta = TWO_PI * (T.cum_areas[k] + 0.5 * cross(a, X)) / T.area
    zero = np.hypot(d[:, 0], d[:, 1]) == 0.0
    s = np.where(zero, 0.0, s)
    theta = np.where(zero, 0.0, np.mod(theta, TWO_PI))
    return s, theta


def eval_H_inv(em: ElevationMap, y, tol: float = 1e-12):
    s, theta = disk_coords(em, y)
    if np.any(s > 1.0 + tol):
        raise DomainError("point outside the star polygon")
    return s[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def disk_to_point(em: ElevationMap, s, theta):
    """H at polar disk coordinates (s, theta); vectorized, no domain check."""
    T = em.domain
    s = np.asarray(s, dtype=float)
    _, X = sector_point(T, np.mod(theta, TWO_PI) / TWO_PI * T.area)
    return T.center + s[..., None] * X


class ElevationLayer(Layer):
    """H as a map layer: domain is the closed unit disk."""

    name = "elevation"

    def __init__(self, em: ElevationMap):
        self.em = em

    def __call__(self, pts):
        return eval_H(self.em, pts, tol=1e-9)

    def domain(self, pts):
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0], pts[:, 1]) <= 1.0


class StarToStarLayer(Layer):
    name = "star_to_star"

    def __init__(self, T1: StarPolygon, T2: StarPolygon):
        self.h1 = ElevationMap(T1)
        self.h2 = ElevationMap(T2)

    def __call__(self, pts):
        s, theta = disk_coords(self.h1, pts)
        return disk_to_point(self.h2, s, theta)

    def domain(self, pts):
        return self.h1.domain.elevation(pts) <= 1.0


def star_to_star(T1: StarPolygon, T2: StarPolygon, tol: float = 1e-9) -> PlaneMap:
    """Sector-preserving, area-preserving homeomorphism T1 -> T2 (equal areas)."""
    if abs(T1.area - T2.area) > tol * max(T1.area, T2.area):
        raise ValidationError("star_to_star needs equal areas (%.12g vs %.12g)" % (T1.area, T2.area))
    return PlaneMap([StarToStarLayer(T1, T2)], name="star_to_star")


def distance_to_break_rays(angles, pts, center=(0.0, 0.0)):
    """Perpendicular distance from points to a family of rays leaving center."""
    pts = np.atleast_2d(pts) - np.asarray(center, dtype=float)
    best = np.full(len(pts), np.inf)
    for a in np.atleast_1d(angles):
        u = np.array([math.cos(a), math.sin(a)])
        t = pts @ u
        d = np.abs(cross(np.broadcast_to(u, pts.shape), pts))
        d = np.where(t >= 0, d, np.hypot(pts[:, 0], pts[:, 1]))
        best = np.minimum(best, d)
    return best
