"""Tilings and separated nets: one point per tile, and the square-grid tiling T_y around a net."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geometry import boundary_samples, point_in_polygon


@dataclass
class SeparatedNet:
    points: np.ndarray
    r_sep: float  # smallest pairwise distance
    R_cov: float  # largest distance from a region point to the net (grid estimate)
    region: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"format": "startile.net/1", "points": np.round(self.points, 12).tolist(),
               "r_sep": self.r_sep, "R_cov": self.R_cov}
        if self.region is not None:
            out["region"] = np.round(self.region, 12).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SeparatedNet":
        if "points" not in d:
            raise ValidationError("net file has no points")
        reg = d.get("region")
        return cls(np.asarray(d["points"], dtype=float).reshape(-1, 2), float(d.get("r_sep", float("nan"))),
                   float(d.get("R_cov", float("nan"))), None if reg is None else np.asarray(reg, dtype=float))


def separation(points) -> float:
    """Minimum pairwise distance (inf for fewer than two points)."""
    pts = np.atleast_2d(points)
    if len(pts) < 2:
        return math.inf
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].min())


def covering_radius(points, polygons, resolution: int = 200) -> float:
    """Largest distance from a dense grid over the polygons, plus their boundaries, to the nearest net point."""
    pts = np.atleast_2d(points)
    allv = np.concatenate([np.asarray(p) for p in polygons])
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    gx = np.linspace(lo[0], hi[0], resolution)
    gy = np.linspace(lo[1], hi[1], resolution)
    grid = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
    inside = np.zeros(len(grid), dtype=bool)
    for p in polygons:
        inside |= point_in_polygon(p, grid)
    # the farthest points of thin tiles sit on their edges and corners
    edges = [np.vstack([p, boundary_samples(p, 8 * len(p))]) for p in polygons]
    grid = np.concatenate([grid[inside]] + edges)
    d, _ = cKDTree(pts).query(grid)
    return float(d.max())


def extract_net(patch, sys, resolution: int = 200) -> SeparatedNet:
    """One point per tile: the prototile's star center carried by the tile's placement."""
    centers = np.array([t.placement.apply(sys.prototiles[t.type].shape.center[None])[0] for t in patch.tiles])
    polys = patch.polygons(sys)
    return SeparatedNet(centers, separation(centers), covering_radius(centers, polys, resolution))


@dataclass
class TauY:
    """Assignment of grid squares to net points; tiles[i] lists the squares owned by point i."""

    side: float
    origin: np.ndarray
    squares: np.ndarray  # (n, 2) integer grid indices of the squares in the region
    owner: np.ndarray  # (n,) index of the owning net point
    net: SeparatedNet
    tiles: list = field(default_factory=list)

    def square_corners(self, idx) -> np.ndarray:
        ij = self.squares[np.atleast_1d(idx)]
        base = self.origin + self.side * ij
        off = self.side * np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return base[:, None, :] + off[None]

    def to_dict(self) -> dict:
        return {"format": "startile.tauy/1", "side": self.side, "origin": self.origin.tolist(),
                "squares": self.squares.tolist(), "owner": self.owner.tolist(),
                "points": np.round(self.net.points, 12).tolist()}


def auto_side(r_sep: float) -> float:
    """Largest power of 1/2 not above r_sep / 4."""
    if not r_sep > 0 or not math.isfinite(r_sep):
        return 0.25
    return 2.0 ** math.floor(math.log2(r_sep / 4.0))


def build_tau_Y(net: SeparatedNet, region, side: float | None = None, exact_distance: bool = False,
                candidates: int = 8) -> TauY:
    """Give every grid square in the region to its nearest net point (ties to the lowest index).

    A square belongs to the region when its center does.  Distance is the
    minimum over the square's corners and center, or the true set distance
    with exact_distance=True.
    """
    pts = np.atleast_2d(np.asarray(net.points, dtype=float))
    if len(pts) == 0 or pts.size == 0:
        raise ValidationError("empty net")
    region = np.asarray(getattr(region, "vertices", region), dtype=float)
    if side is None:
        side = auto_side(net.r_sep)
    lo, hi = region.min(axis=0), region.max(axis=0)
    origin = np.floor(lo / side) * side
    n = np.ceil((hi - origin) / side).astype(int)
    I, J = np.meshgrid(np.arange(n[0]), np.arange(n[1]), indexing="ij")
    ij = np.stack([I.ravel(), J.ravel()], axis=1)
    centers = origin + side * (ij + 0.5)
    keep = point_in_polygon(region, centers)
    ij, centers = ij[keep], centers[keep]
    tree = cKDTree(pts)
    k = min(candidates, len(pts))
    while True:
        cd, near = tree.query(centers, k=k)
        cd = cd.reshape(len(centers), k)
        near = near.reshape(len(centers), k)
        dist = np.stack([_block_distance(centers, side, pts[near[:, c]], exact_distance) for c in range(k)], axis=1)
        best = dist.min(axis=1)
        # any point not among the k nearest centers is at least cd[:, -1] - side/sqrt(2) away
        if k == len(pts) or np.all(cd[:, -1] - side / math.sqrt(2) > best + 1e-12):
            break
        k = min(2 * k, len(pts))
    tol = 1e-12 * max(1.0, side)
    tied = dist <= best[:, None] + tol
    owner = np.where(tied, near, np.iinfo(np.int64).max).min(axis=1)
    tiles = [np.nonzero(owner == i)[0] for i in range(len(pts))]
    return TauY(side, origin, ij, owner, net, tiles)


def _block_distance(centers, side, targets, exact):
    h = side / 2.0
    if exact:
        dx = np.maximum(np.abs(targets[:, 0] - centers[:, 0]) - h, 0.0)
        dy = np.maximum(np.abs(targets[:, 1] - centers[:, 1]) - h, 0.0)
        return np.hypot(dx, dy)
    best = np.hypot(*(centers - targets).T)
    for sx in (-h, h):
        for sy in (-h, h):
            best = np.minimum(best, np.hypot(centers[:, 0] + sx - targets[:, 0], centers[:, 1] + sy - targets[:, 1]))
    return best


def brute_force_owner(net: SeparatedNet, tau: TauY, exact_distance: bool = False) -> np.ndarray:
    """Reference assignment checking every square against every point."""
    pts = np.atleast_2d(net.points)
    centers = tau.origin + tau.side * (tau.squares + 0.5)
    d = np.stack([_block_distance(centers, tau.side, np.broadcast_to(p, centers.shape), exact_distance)
                  for p in pts], axis=1)
    best = d.min(axis=1, keepdims=True)
    return np.argmax(d <= best + 1e-12 * max(1.0, tau.side), axis=1)


def shape_classes(tau: TauY) -> int:
    """Number of distinct tile shapes up to translation (squares as grid offsets from the minimum)."""
    seen = set()
    for sq in tau.tiles:
        if len(sq) == 0:
            continue
        ij = tau.squares[sq]
        seen.add(tuple(sorted(map(tuple, (ij - ij.min(axis=0)).tolist()))))
    return len(seen)
