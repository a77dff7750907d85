"""Level densities, the composed map phi_m = psi_m o ... o psi_1, and its checks.

Everything happens inside one working supertile of level W.  A level-k
supertile of type t is a similar copy of the prototile P_t scaled by xi^k,
so the level-k corrector only depends on t: it is built once in P_t
coordinates (children are the level-(k-1) pieces) and conjugated into
place by each node's similarity.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .corrections import tile_corrector
from .errors import NumericError, ResourceError, ValidationError
from .geometry import distance_to_boundary, point_in_polygon
from .maps import Layer, PlaneMap, as_plane_map, numerical_jacobian, residual_summary
from .substitution import (ConvergenceStats, SubstitutionSystem, count_tiles, dilation, pf_stats,
                           product_report)


# -- level densities ------------------------------------------------------------------


@dataclass
class LevelDensity:
    level: int
    by_type: np.ndarray  # value on any level-m supertile of each type
    node_values: np.ndarray | None = None  # per node of a hierarchy, when accumulated tile by tile


def level_density(sys: SubstitutionSystem, m: int, f=None, hierarchy=None) -> LevelDensity:
    """Average of f over level-m supertiles.

    f=None is the reciprocal-area density, for which the value on a type-t
    supertile is #tiles / (xi^(2m) |P_t|) exactly.  Otherwise f gives one
    value per prototile type; with a hierarchy, f may instead be an array
    with one value per level-0 tile and is accumulated upward.
    """
    if m < 0:
        raise ValidationError("level must be nonnegative")
    areas = sys.areas
    if f is not None and hierarchy is not None and len(np.atleast_1d(f)) == hierarchy.count(0):
        vals = np.asarray(f, dtype=float)
        mass = vals * hierarchy.node_area(0)
        for k in range(1, m + 1):
            mass = np.bincount(hierarchy.parent[k - 1], weights=mass, minlength=hierarchy.count(k))
        node_vals = mass / hierarchy.node_area(m)
        by_type = np.array([node_vals[hierarchy.types[m] == t].mean() if np.any(hierarchy.types[m] == t) else np.nan
                            for t in range(sys.n_types)])
        return LevelDensity(m, by_type, node_vals)
    out = np.empty(sys.n_types)
    for t in range(sys.n_types):
        counts = count_tiles(sys, t, m)
        if f is None:
            mass = float(sum(counts))
        else:
            fv = np.asarray(f, dtype=float)
            mass = float(sum(c * fv[i] * areas[i] for i, c in enumerate(counts)))
        out[t] = mass / (sys.xi ** (2 * m) * areas[t])
    ld = LevelDensity(m, out)
    if hierarchy is not None:
        ld.node_values = out[hierarchy.types[m]]
    return ld


# -- the working supertile --------------------------------------------------------------


class Hierarchy:
    """All supertiles of levels 0..W inside a level-W supertile of root_type.

    Node i of level k maps P_t coordinates to the world by x -> A[i] x + b[i].
    The root sits at the origin with scale xi^W, so level-0 tiles have
    prototile size.
    """

    def __init__(self, sys: SubstitutionSystem, root_type: int, level: int, max_tiles: int = 2_000_000):
        total = sum(count_tiles(sys, root_type, level))
        if total > max_tiles:
            raise ResourceError("working supertile of level %d has %d tiles, above the cap %d"
                                % (level, total, max_tiles))
        self.sys, self.root_type, self.level = sys, root_type, level
        shrink = dilation(1.0 / sys.xi)
        steps = [[shrink.compose(ch.placement) for ch in sys.rules[t]] for t in range(sys.n_types)]
        step_A = [np.array([s.matrix for s in st]) for st in steps]
        step_b = [np.array([s.offset for s in st]) for st in steps]
        self.types = [None] * (level + 1)
        self.A = [None] * (level + 1)
        self.b = [None] * (level + 1)
        self.parent = [None] * (level + 1)
        self.child_slot = [None] * (level + 1)
        self.first_child = [None] * (level + 1)
        self.types[level] = np.array([root_type])
        self.A[level] = (sys.xi ** level * np.eye(2))[None]
        self.b[level] = np.zeros((1, 2))
        for k in range(level, 0, -1):
            T, A, b = self.types[k], self.A[k], self.b[k]
            ct, cA, cb, par, slot = [], [], [], [], []
            first = np.zeros(len(T), dtype=int)
            for i in range(len(T)):
                t = T[i]
                first[i] = len(ct)
                for j, ch in enumerate(sys.rules[t]):
                    ct.append(ch.type)
                    cA.append(A[i] @ step_A[t][j])
                    cb.append(A[i] @ step_b[t][j] + b[i])
                    par.append(i)
                    slot.append(j)
            self.first_child[k] = first
            self.types[k - 1] = np.array(ct)
            self.A[k - 1] = np.array(cA)
            self.b[k - 1] = np.array(cb)
            self.parent[k - 1] = np.array(par)
            self.child_slot[k - 1] = np.array(slot)
        self.Ainv = [np.linalg.inv(a) for a in self.A]
        self.child_polys = [sys.child_polygons(t) for t in range(sys.n_types)]

    def count(self, k: int) -> int:
        return len(self.types[k])

    def node_area(self, k: int) -> np.ndarray:
        return np.abs(np.linalg.det(self.A[k])) * self.sys.areas[self.types[k]]

    def polygon(self, k: int, i: int) -> np.ndarray:
        shape = self.sys.prototiles[self.types[k][i]].shape
        return shape.vertices @ self.A[k][i].T + self.b[k][i]

    def root_polygon(self) -> np.ndarray:
        return self.polygon(self.level, 0)

    def address(self, k: int, i: int) -> tuple:
        path = []
        while k < self.level:
            path.append(int(self.child_slot[k][i]))
            i = self.parent[k][i]
            k += 1
        return tuple(reversed(path))

    def to_local(self, k, nodes, pts):
        return np.einsum("nij,nj->ni", self.Ainv[k][nodes], pts - self.b[k][nodes])

    def to_world(self, k, nodes, pts):
        return np.einsum("nij,nj->ni", self.A[k][nodes], pts) + self.b[k][nodes]

    def locate(self, pts, k: int = 0) -> np.ndarray:
        """Index of the level-k node containing each point (nearest piece when on a seam)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        node = np.zeros(len(pts), dtype=int)
        for lvl in range(self.level, k, -1):
            nxt = np.full(len(pts), -1)
            local = self.to_local(lvl, node, pts)
            tp = self.types[lvl][node]
            for t in range(self.sys.n_types):
                sel = np.nonzero(tp == t)[0]
                if len(sel) == 0:
                    continue
                polys = self.child_polys[t]
                slot = np.full(len(sel), -1)
                best = np.full(len(sel), np.inf)
                for j, poly in enumerate(polys):
                    free = slot < 0
                    if not np.any(free):
                        break
                    inside = point_in_polygon(poly, local[sel[free]])
                    idx = np.nonzero(free)[0][inside]
                    slot[idx] = j
                missing = np.nonzero(slot < 0)[0]
                if len(missing):
                    for j, poly in enumerate(polys):
                        d = distance_to_boundary(poly, local[sel[missing]])
                        better = d < best[missing]
                        best[missing[better]] = d[better]
                        slot[missing[better]] = j
                nxt[sel] = self.first_child[lvl][node[sel]] + slot
            node = nxt
        return node

    def contains(self, pts) -> np.ndarray:
        return point_in_polygon(self.root_polygon(), pts)


# -- per-level layers -------------------------------------------------------------------


class SupertileLayer(Layer):
    """Apply the type-t canonical corrector inside every level-k supertile of type t."""

    name = "supertile"

    def __init__(self, hierarchy: Hierarchy, level: int, correctors: dict):
        self.h, self.k = hierarchy, level
        self.correctors = {t: c for t, c in correctors.items() if c is not None and c.layers}
        self.name = "supertile_level_%d" % level

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        if not self.correctors:
            return out
        node = self.h.locate(pts, self.k)
        types = self.h.types[self.k][node]
        for t, corr in self.correctors.items():
            sel = np.nonzero(types == t)[0]
            if len(sel) == 0:
                continue
            local = self.h.to_local(self.k, node[sel], pts[sel])
            out[sel] = self.h.to_world(self.k, node[sel], corr(local))
        return out

    def domain(self, pts):
        return self.h.contains(pts)


@dataclass
class RealizedMap:
    sys: SubstitutionSystem
    hierarchy: Hierarchy
    levels: int
    map: PlaneMap
    corrector_reports: dict = field(default_factory=dict)

    def __call__(self, pts):
        return self.map(pts)

    def phi(self, m: int) -> PlaneMap:
        return self.map.prefix(m)

    def f_tau(self, pts):
        node = self.hierarchy.locate(pts, 0)
        return 1.0 / self.hierarchy.node_area(0)[node]

    def f_level(self, m: int, pts):
        node = self.hierarchy.locate(pts, m)
        return level_density(self.sys, m).by_type[self.hierarchy.types[m][node]]

    def jacobian_target(self, m: int, pts, images=None):
        """f / (f_m o phi_m): what Jac(phi_m) must equal."""
        images = self.phi(m)(pts) if images is None else images
        return self.f_tau(pts) / self.f_level(m, images)


def canonical_corrector(sys: SubstitutionSystem, k: int, t: int, config: Config):
    """Level-k corrector for type t in P_t coordinates; None when it is the identity."""
    parts = sys.child_star_polygons(t)
    prev = level_density(sys, k - 1).by_type
    vals = [prev[ch.type] for ch in sys.rules[t]]
    if max(vals) / min(vals) - 1.0 < 1e-14:
        return None, {"identity": True}
    res = tile_corrector(sys.prototiles[t].shape, parts, vals, config.corrector)
    return res.map, res.report


def build_phi_m(sys: SubstitutionSystem, root_type: int, M_levels: int, working_level: int | None = None,
                config: Config | None = None) -> RealizedMap:
    cfg = config or Config()
    W = max(M_levels, cfg.working_level if working_level is None else working_level)
    hier = Hierarchy(sys, root_type, W, max_tiles=cfg.max_tiles)
    jobs = [(k, t) for k in range(1, M_levels + 1) for t in range(sys.n_types)
            if np.any(hier.types[k] == t)]

    def run(job):
        k, t = job
        try:
            return job, canonical_corrector(sys, k, t, cfg)
        except (NumericError, ValidationError) as exc:
            i = int(np.nonzero(hier.types[k] == t)[0][0])
            raise type(exc)("corrector for level-%d supertile of type %d failed (address %s): %s"
                            % (k, t, list(hier.address(k, i)), exc)) from exc

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = dict(pool.map(run, jobs))
    layers = []
    reports = {}
    for k in range(1, M_levels + 1):
        corr = {}
        for t in range(sys.n_types):
            if (k, t) in results:
                corr[t], reports[(k, t)] = results[(k, t)]
        layers.append(SupertileLayer(hier, k, corr))
    return RealizedMap(sys, hier, M_levels, PlaneMap(layers, name="phi_%d" % M_levels), reports)


# -- verification ---------------------------------------------------------------------------


def sample_working_region(hier: Hierarchy, n: int, rng, margin: float = 1e-3):
    """Uniform points of the working supertile, at least margin * inradius away from tile edges.

    Returns the points and the fraction of in-region candidates that were excluded.
    """
    sys = hier.sys
    root = hier.root_polygon()
    lo, hi = root.min(axis=0), root.max(axis=0)
    inr = np.array([p.shape.inradius for p in sys.prototiles])
    kept, seen, dropped = [], 0, 0
    got = 0
    while got < n:
        cand = lo + (hi - lo) * rng.random((max(256, 2 * (n - got)), 2))
        cand = cand[point_in_polygon(root, cand)]
        if len(cand) == 0:
            continue
        node = hier.locate(cand, 0)
        local = hier.to_local(0, node, cand)
        ok = np.zeros(len(cand), dtype=bool)
        for t in range(sys.n_types):
            sel = hier.types[0][node] == t
            if np.any(sel):
                ok[sel] = distance_to_boundary(sys.prototiles[t].shape.vertices, local[sel]) > margin * inr[t]
        seen += len(cand)
        dropped += int((~ok).sum())
        kept.append(cand[ok])
        got += int(ok.sum())
    return np.concatenate(kept)[:n], dropped / max(seen, 1)


def verify_jacobian(plane_map, target, points, h: float = 1e-6) -> dict:
    """Relative residual |Jac_num / target - 1| over the points.

    target is a number, an array with one value per point, or a callable of
    the points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    J = numerical_jacobian(plane_map, pts, h)
    if callable(target):
        tv = np.asarray(target(pts), dtype=float)
    else:
        tv = np.broadcast_to(np.asarray(target, dtype=float), (len(pts),))
    return residual_summary(J / tv - 1.0)


@dataclass
class BilipEstimate:
    lower: float
    forward: float
    backward: float
    pairs: int


def bilip_estimate(plane_map, pairs: int = 10_000, rng=None, points=None, region=None,
                   min_sep: float = 1e-4) -> BilipEstimate:
    """Lower bound on the biLipschitz constant from random pairs.

    Half the pairs are global, half are short (about 1% of the region size)
    so that local stretching is seen.
    """
    rng = rng or np.random.default_rng(42)
    pm = as_plane_map(plane_map)
    if points is None:
        reg = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]) if region is None else np.asarray(region)
        lo, hi = reg.min(axis=0), reg.max(axis=0)
        pts = []
        while sum(len(p) for p in pts) < 2 * pairs:
            c = lo + (hi - lo) * rng.random((2 * pairs, 2))
            pts.append(c[point_in_polygon(reg, c)])
        points = np.concatenate(pts)[: 2 * pairs]
    points = np.atleast_2d(points)
    size = float(np.ptp(points, axis=0).max())
    half = pairs // 2
    i = rng.integers(0, len(points), pairs)
    j = rng.integers(0, len(points), pairs)
    x, y = points[i], points[j].copy()
    ang = rng.uniform(0, 2 * math.pi, pairs - half)
    rad = 0.01 * size * np.sqrt(rng.random(pairs - half))
    y[half:] = x[half:] + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    dom = pm.domain(y)
    dist = np.hypot(*(x - y).T)
    keep = dom & (dist >= min_sep)
    x, y, dist = x[keep], y[keep], dist[keep]
    img = np.hypot(*(pm(x) - pm(y)).T)
    ratio = img / dist
    fwd = float(ratio.max()) if len(ratio) else float("nan")
    bwd = float((1.0 / ratio).max()) if len(ratio) else float("nan")
    return BilipEstimate(max(fwd, bwd), fwd, bwd, int(len(ratio)))


def convergence_report(sys: SubstitutionSystem, M: int, realized: RealizedMap | None = None,
                       samples: int = 2000, config: Config | None = None) -> ConvergenceStats:
    """E(m) table with partial products and fitted decay; with a realized map also
    per-level Jacobian residuals and biLipschitz lower bounds."""
    cfg = config or Config()
    stats = product_report(sys, M)
    if realized is None:
        return stats
    rng = np.random.default_rng(cfg.seed)
    pts, excluded = sample_working_region(realized.hierarchy, samples, rng, cfg.boundary_margin)
    rho = pf_stats(sys).rho
    stats.residuals["excluded_fraction"] = excluded
    for m in range(1, realized.levels + 1):
        phi = realized.phi(m)
        img = phi(pts)
        J = numerical_jacobian(phi, pts, cfg.fd_step)
        f = realized.f_tau(pts)
        stats.residuals[m] = {
            "telescoping": residual_summary(J / (f / realized.f_level(m, img)) - 1.0),
            "vs_rho": residual_summary(J * rho / f - 1.0),
        }
        stats.bilip[m] = bilip_estimate(phi, pairs=min(samples, 5000), rng=rng, points=pts).lower
    return stats
