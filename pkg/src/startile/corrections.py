"""Per-tile density correction: psi = psi3 o psi2 o psi1.

psi1  equalizes a piecewise-constant density into hat profiles that live on
      contracted copies of the parts (radial in each part's elevation).
psi2  moves that mass across a star annulus around a witness point q into a
      ring profile (numerical Moser flow, fixes the annulus boundary).
psi3  flattens the ring profile to the constant 1 (radial about q).

Every radial layer is exact up to floating point; only psi2 carries grid
error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, NumericError, ValidationError
from .geometry import StarPolygon, TWO_PI, boundary_samples, contract, find_witness_point, min_elevation_over
from .maps import Layer, PlaneMap, numerical_jacobian, residual_summary
from .starmap import ElevationMap, disk_coords, disk_to_point


# -- elevation profiles ---------------------------------------------------------------


class Profile:
    """Positive piecewise-linear function of the elevation s in [0, 1].

    Repeated knots encode jumps.  mass(s) is the integral of 2*t*h(t) from 0
    to s, which is the fraction of a star domain's h-mass inside elevation s
    (per unit area).
    """

    def __init__(self, knots, values):
        s = np.asarray(knots, dtype=float)
        v = np.asarray(values, dtype=float)
        if s.shape != v.shape or len(s) < 2:
            raise ValidationError("profile needs matching knots and values")
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) < 0):
            raise ValidationError("profile knots must run from 0 to 1")
        if not np.all(v > 0):
            raise ValidationError("profile must be strictly positive")
        self.knots, self.values = s, v
        keep = np.diff(s) > 0
        self.a = s[:-1][keep]
        self.b = s[1:][keep]
        va, vb = v[:-1][keep], v[1:][keep]
        self.beta = (vb - va) / (self.b - self.a)
        self.alpha = va - self.beta * self.a
        seg = self.alpha * (self.b ** 2 - self.a ** 2) + 2.0 / 3.0 * self.beta * (self.b ** 3 - self.a ** 3)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    @classmethod
    def constant(cls, value):
        return cls([0.0, 1.0], [value, value])

    @classmethod
    def hat(cls, base, excess, r):
        """base + excess * max(0, (r - s) / r)"""
        if excess == 0:
            return cls.constant(base)
        return cls([0.0, r, 1.0] if r < 1 else [0.0, 1.0], [base + excess, base, base] if r < 1 else [base + excess, base])

    @classmethod
    def tent(cls, base, peak, lo, hi=1.0):
        """base off [lo, hi], rising linearly to base + peak at the midpoint."""
        if peak == 0:
            return cls.constant(base)
        mid = 0.5 * (lo + hi)
        knots = [0.0, lo, mid, hi] + ([1.0] if hi < 1 else [])
        vals = [base, base, base + peak, base] + ([base] if hi < 1 else [])
        return cls(knots, vals)

    def _seg(self, s):
        return np.clip(np.searchsorted(self.a, s, side="right") - 1, 0, len(self.a) - 1)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        i = self._seg(s)
        return self.alpha[i] + self.beta[i] * s

    def mass(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        i = self._seg(s)
        a = self.a[i]
        return self.cum[i] + self.alpha[i] * (s * s - a * a) + 2.0 / 3.0 * self.beta[i] * (s ** 3 - a ** 3)

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def inverse_mass(self, m):
        """Elevation at which mass() reaches m (bisection inside the segment)."""
        m = np.clip(np.asarray(m, dtype=float), 0.0, self.total)
        i = np.clip(np.searchsorted(self.cum, m, side="right") - 1, 0, len(self.a) - 1)
        lo, hi = self.a[i].copy(), self.b[i].copy()
        al, be, a0, c0 = self.alpha[i], self.beta[i], self.a[i], self.cum[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = c0 + al * (mid * mid - a0 * a0) + 2.0 / 3.0 * be * (mid ** 3 - a0 ** 3)
            below = val < m
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def lip(self) -> float:
        if np.any(np.diff(self.knots) == 0) and np.any(np.diff(self.values)[np.diff(self.knots) == 0] != 0):
            return math.inf
        return float(np.max(np.abs(self.beta))) if len(self.beta) else 0.0

    def scaled(self, k: float) -> "Profile":
        return Profile(self.knots, self.values * k)


# -- densities -------------------------------------------------------------------------


class Density:
    """Positive function on a region, evaluated on arrays of points."""

    def __call__(self, pts):
        raise NotImplementedError

    def integral(self) -> float:
        raise NotImplementedError


def _locate_parts(parts, pts):
    pts = np.atleast_2d(pts)
    idx = np.full(len(pts), -1)
    elev = np.full(len(pts), np.inf)
    for i, p in enumerate(parts):
        s = p.elevation(pts)
        take = (idx < 0) & (s <= 1.0 + 1e-12)
        idx[take] = i
        elev[take] = s[take]
    return idx, elev


class PiecewiseConstantDensity(Density):
    def __init__(self, parts, values):
        self.parts = list(parts)
        self.values = np.asarray(values, dtype=float)
        if len(self.values) != len(self.parts):
            raise ValidationError("one value per part")
        if not np.all(self.values > 0):
            raise ValidationError("density must be strictly positive")

    def __call__(self, pts):
        idx, _ = _locate_parts(self.parts, pts)
        out = np.full(len(idx), np.nan)
        out[idx >= 0] = self.values[idx[idx >= 0]]
        return out

    def integral(self) -> float:
        return float(sum(v * p.area for v, p in zip(self.values, self.parts)))

    @property
    def min(self):
        return float(self.values.min())

    @property
    def max(self):
        return float(self.values.max())

    lip = 0.0


class ProfileDensity(Density):
    """Per sub-domain elevation profile; `background` elsewhere (nan if None)."""

    def __init__(self, parts, profiles, background=None):
        self.parts = list(parts)
        self.profiles = list(profiles)
        self.background = background

    def __call__(self, pts):
        idx, elev = _locate_parts(self.parts, pts)
        bg = np.nan if self.background is None else self.background
        out = np.full(len(idx), bg, dtype=float)
        for i, prof in enumerate(self.profiles):
            sel = idx == i
            if np.any(sel):
                out[sel] = prof(elev[sel])
        return out

    def integral(self) -> float:
        return float(sum(p.area * prof.total for p, prof in zip(self.parts, self.profiles)))

    @property
    def min(self):
        vals = [p.min for p in self.profiles] + ([self.background] if self.background is not None else [])
        return float(min(vals))

    @property
    def max(self):
        vals = [p.max for p in self.profiles] + ([self.background] if self.background is not None else [])
        return float(max(vals))

    @property
    def lip(self):
        """Lipschitz bound in the elevation coordinate of each part."""
        return float(max(p.lip for p in self.profiles))


class FunctionDensity(Density):
    def __init__(self, fn, integral=None):
        self.fn = fn
        self._integral = integral

    def __call__(self, pts):
        return np.asarray(self.fn(np.atleast_2d(pts)), dtype=float)

    def integral(self) -> float:
        if self._integral is None:
            raise NotImplementedError("integral not supplied")
        return self._integral


# -- radial layers (exact) -------------------------------------------------------------


def _radial_target(h1: Profile, h2: Profile, s):
    return h2.inverse_mass(h1.mass(s) * (h2.total / h1.total))


class RadialLayer(Layer):
    """On each star domain, slide points along rays from its center so that
    elevation mass of h1 below s equals elevation mass of h2 below s'."""

    name = "radial"

    def __init__(self, domains, pairs):
        self.domains = list(domains)
        self.pairs = list(pairs)
        for (h1, h2), d in zip(self.pairs, self.domains):
            if abs(h1.total - h2.total) > 1e-9 * max(h1.total, h2.total):
                raise ValidationError("radial equalizer needs equal integrals (%.15g vs %.15g) on %d-gon"
                                      % (h1.total * d.area, h2.total * d.area, d.n))

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        idx, elev = _locate_parts(self.domains, pts)
        for i, (dom, (h1, h2)) in enumerate(zip(self.domains, self.pairs)):
            sel = np.nonzero((idx == i) & (elev > 0))[0]
            if len(sel) == 0:
                continue
            s = np.minimum(elev[sel], 1.0)
            s_new = _radial_target(h1, h2, s)
            out[sel] = dom.center + (s_new / elev[sel])[:, None] * (pts[sel] - dom.center)
        return out

    def jacobian_target(self, pts, images):
        """Exact Jacobian h1(s) / h2(s') at the given points."""
        idx, elev = _locate_parts(self.domains, pts)
        out = np.ones(len(idx))
        for i, (dom, (h1, h2)) in enumerate(zip(self.domains, self.pairs)):
            sel = idx == i
            if np.any(sel):
                out[sel] = h1(elev[sel]) / h2(dom.elevation(images[sel]))
        return out


def radial_equalizer(D: StarPolygon, h1: Profile, h2: Profile, tol: float = 1e-9) -> PlaneMap:
    """Homeomorphism of D fixing its boundary with Jac = h1 / (h2 o phi)."""
    if min(h1.min, h2.min) <= 0:
        raise ValidationError("profiles must be strictly positive")
    if abs(h1.total - h2.total) > tol * max(h1.total, h2.total):
        raise ValidationError("integral mismatch: %.15g vs %.15g" % (h1.total * D.area, h2.total * D.area))
    return PlaneMap([RadialLayer([D], [(h1, h2)])], name="radial_equalizer")


def sup_norm_g(h: Profile, r):
    """g(r) = 1/2 sqrt(integral over the sup-norm square S_r of h(|x|_inf)).

    The square S_r has area 4 r^2 and d|S_s| = 8 s ds, so the integral is
    4 * h.mass(r).
    """
    return 0.5 * np.sqrt(4.0 * h.mass(r))


class SupNormRadialLayer(Layer):
    """x -> g(|x|_inf) x / |x|_inf on the square [-1, 1]^2, which pushes h(|x|_inf) dx to dx."""

    name = "sup_norm_radial"

    def __init__(self, h: Profile):
        if abs(h.total - 1.0) > 1e-9:
            raise ValidationError("density must integrate to the square's area 4 (mass %.12g)" % (4 * h.total))
        self.h = h

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.max(np.abs(pts), axis=1)
        out = pts.copy()
        sel = (r > 0) & (r <= 1.0)
        out[sel] = (sup_norm_g(self.h, r[sel]) / r[sel])[:, None] * pts[sel]
        return out


# -- annulus transport (grid flow) ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StarAnnulus:
    outer: StarPolygon
    inner_ratio: float

    def __post_init__(self):
        if not 0.0 < self.inner_ratio < 1.0:
            raise GeometryError("inner ratio must lie in (0, 1)")

    @property
    def area(self) -> float:
        return (1.0 - self.inner_ratio ** 2) * self.outer.area

    @property
    def inner(self) -> StarPolygon:
        return contract(self.outer, self.inner_ratio)

    def contains(self, pts):
        s = self.outer.elevation(pts)
        return (s >= self.inner_ratio) & (s <= 1.0)

    def boundary_samples(self, count: int):
        half = count // 2
        return np.concatenate([boundary_samples(self.outer.vertices, count - half),
                               boundary_samples(self.inner.vertices, half)])

    @property
    def grid_scale_factor(self) -> float:
        return float(np.max(np.hypot(*self.outer.rel.T)))


class AnnulusFlowLayer(Layer):
    """Moser flow on a star annulus in (elevation, disk-angle) coordinates.

    With C(s, t) = H(s e^{it}) the annulus becomes the periodic strip
    [r_in, 1] x S^1 and the densities become G = g(C) * (|S|/pi) * s.  On the
    grid the G's are taken bilinear; for those interpolants the field

        w_s = int_{r_in}^s D ds' - chi(s) d(t),   w_t = chi'(s) int_0^t d,

    with D = G1 - G2, d(t) = int D ds and chi a smoothstep from 0 to 1, has
    divergence exactly D and vanishes on both boundary circles.  Integrating
    x' = w / ((1 - t) G1 + t G2) over t in [0, 1] pushes G1 to G2.
    """

    name = "annulus_flow"

    def __init__(self, annulus: StarAnnulus, g1, g2, grid: int = 256, steps: int = 64):
        self.annulus = annulus
        self.em = ElevationMap(annulus.outer)
        self.r_in = r_in = annulus.inner_ratio
        self.ns = ns = int(grid)
        self.nt = nt = int(grid)
        self.steps = int(steps)
        self.ds = (1.0 - r_in) / ns
        self.dt = TWO_PI / nt
        sig = r_in + self.ds * np.arange(ns + 1)
        sig[-1] = 1.0
        th = self.dt * np.arange(nt)
        S, TH = np.meshgrid(sig, th, indexing="ij")
        P = disk_to_point(self.em, S.ravel(), TH.ravel())
        J = self.em.normalization * S
        G1 = np.asarray(g1(P), dtype=float).reshape(S.shape) * J
        G2 = np.asarray(g2(P), dtype=float).reshape(S.shape) * J
        if not (np.all(np.isfinite(G1)) and np.all(np.isfinite(G2))):
            raise NumericError("density not finite on the annulus grid")
        if not (np.all(G1 > 0) and np.all(G2 > 0)):
            raise NumericError("density not positive on the annulus grid")
        w = np.full(ns + 1, self.ds)
        w[0] = w[-1] = self.ds / 2
        m1 = float(np.sum(w[:, None] * G1) * self.dt)
        m2 = float(np.sum(w[:, None] * G2) * self.dt)
        self.mass_mismatch = m1 / m2 - 1.0
        G2 = G2 * (m1 / m2)
        self.G1, self.G2 = G1, G2
        D = G1 - G2
        self.D = D
        I = np.zeros_like(D)
        I[1:] = np.cumsum(0.5 * self.ds * (D[1:] + D[:-1]), axis=0)
        self.I = I
        d = I[-1].copy()
        self.d = d
        P_ = np.zeros(nt + 1)
        P_[1:] = np.cumsum(0.5 * self.dt * (d + np.roll(d, -1)))
        self.P = P_
        self.closure = float(P_[-1])
        self.exits = 0

    # field ---------------------------------------------------------------------
    def _cells(self, s, t):
        x = (s - self.r_in) / self.ds
        j = np.clip(np.floor(x).astype(int), 0, self.ns - 1)
        u = x - j
        y = np.mod(t, TWO_PI) / self.dt
        k = np.floor(y).astype(int)
        lam = y - k
        k = np.mod(k, self.nt)
        k1 = np.mod(k + 1, self.nt)
        return j, u, k, k1, lam

    def velocity(self, s, t, time):
        j, u, k, k1, lam = self._cells(s, t)
        D, I, ds = self.D, self.I, self.ds
        Ik = I[j, k] + ds * (D[j, k] * u + (D[j + 1, k] - D[j, k]) * u * u / 2)
        Ik1 = I[j, k1] + ds * (D[j, k1] * u + (D[j + 1, k1] - D[j, k1]) * u * u / 2)
        span = 1.0 - self.r_in
        z = (s - self.r_in) / span
        chi = z * z * (3 - 2 * z)
        chip = 6 * z * (1 - z) / span
        dk, dk1 = self.d[k], self.d[k1]
        ws = (1 - lam) * Ik + lam * Ik1 - chi * ((1 - lam) * dk + lam * dk1)
        Pt = self.P[k] + self.dt * (dk * lam + (dk1 - dk) * lam * lam / 2)
        wt = chip * Pt
        G = (1 - time) * self.G1 + time * self.G2
        rho = ((1 - u) * (1 - lam) * G[j, k] + u * (1 - lam) * G[j + 1, k]
               + (1 - u) * lam * G[j, k1] + u * lam * G[j + 1, k1])
        return ws / rho, wt / rho

    def flow(self, s, t):
        h = 1.0 / self.steps
        lo, hi = self.r_in, 1.0
        s = s.copy()
        t = t.copy()
        for n in range(self.steps):
            tau = n * h
            a1 = self.velocity(s, t, tau)
            s2 = s + 0.5 * h * a1[0]
            a2 = self.velocity(np.clip(s2, lo, hi), t + 0.5 * h * a1[1], tau + 0.5 * h)
            s3 = s + 0.5 * h * a2[0]
            a3 = self.velocity(np.clip(s3, lo, hi), t + 0.5 * h * a2[1], tau + 0.5 * h)
            s4 = s + h * a3[0]
            a4 = self.velocity(np.clip(s4, lo, hi), t + h * a3[1], tau + h)
            s = s + h / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
            t = t + h / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
            bad = (s < lo - 1e-9) | (s > hi + 1e-9)
            if np.any(bad):
                self.exits += int(bad.sum())
                worst = float(np.max(np.maximum(lo - s, s - hi)))
                if worst > 1e-6:
                    raise NumericError(
                        "flow left the annulus by %.3g in elevation at step %d (grid %d too coarse?)"
                        % (worst, n, self.ns))
            s = np.clip(s, lo, hi)
        return s, t

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        s, t = disk_coords(self.em, pts)
        sel = np.nonzero((s >= self.r_in) & (s <= 1.0))[0]
        if len(sel):
            s2, t2 = self.flow(s[sel], t[sel])
            out[sel] = disk_to_point(self.em, s2, t2)
        return out

    @property
    def grid_scale(self) -> float:
        """Largest world-space spacing of the flow grid."""
        rmax = self.annulus.grid_scale_factor
        return float(max(self.ds * rmax, self.dt * rmax))


def annulus_transport(A: StarAnnulus, g1, g2, grid: int = 256, steps: int = 64, tol: float = 1e-6,
                      integrals=None) -> PlaneMap:
    """Homeomorphism of A, fixing its boundary, with Jac = g1 / (g2 o phi).

    `integrals` optionally supplies (int_A g1, int_A g2) for the balance check;
    otherwise it is estimated on the flow grid.
    """
    layer = AnnulusFlowLayer(A, g1, g2, grid=grid, steps=steps)
    if integrals is not None:
        i1, i2 = integrals
        if abs(i1 - i2) > tol * max(abs(i1), abs(i2)):
            raise ValidationError("annulus densities have different integrals (%.12g vs %.12g)" % (i1, i2))
    elif abs(layer.mass_mismatch) > 1e-3:
        raise ValidationError("annulus densities have different integrals (relative gap %.3g)" % layer.mass_mismatch)
    return PlaneMap([layer], name="annulus_transport")


# -- auxiliary densities -----------------------------------------------------------------


def build_f2(T: StarPolygon, parts, f: PiecewiseConstantDensity, r: float):
    """Hat-profile density equal to min f outside the r-contracted parts, same mass per part.

    The hat base + c * max(0, (r - s) / r) has elevation moment r^2 / 3, so
    c_i = 3 (f_i - min f) / r^2.
    """
    m = f.min
    profiles, excess = [], []
    for v in f.values:
        c = 3.0 * (v - m) / (r * r)
        if c < 0:
            raise NumericError("negative hat height")
        excess.append(c)
        profiles.append(Profile.hat(m, c, r))
    dens = ProfileDensity(parts, profiles)
    dens.excess = np.array(excess)
    dens.base = m
    return dens


def build_f3(T: StarPolygon, S: StarPolygon, A: StarAnnulus, f2: ProfileDensity, target: float,
             contracted_parts=()):
    """Ring profile in S's elevation: min f off the annulus, a tent on it, total mass `target`."""
    for poly in contracted_parts:
        if min_elevation_over(S, poly.vertices) < A.inner_ratio:
            raise GeometryError("contracted part meets the annulus hole")
        if np.any(S.elevation(poly.vertices) > 1.0 + 1e-12):
            raise GeometryError("contracted part not inside the visible region")
    if np.any(T.elevation(S.vertices) > 1.0 + 1e-9):
        raise GeometryError("visible region not inside the tile")
    m = f2.base
    unit = Profile.tent(1.0, 1.0, A.inner_ratio)
    tent_mass = unit.total - 1.0
    peak = ((target - m * T.area) / S.area) / tent_mass
    if peak < -1e-12 * m:
        raise NumericError("ring profile would need a negative peak")
    peak = max(peak, 0.0)
    prof = Profile.tent(m, peak, A.inner_ratio)
    dens = ProfileDensity([S], [prof], background=m)
    dens.peak = peak
    dens.base = m
    return dens


# -- the per-tile corrector ---------------------------------------------------------------


@dataclass
class CorrectorConfig:
    r: float = 0.6
    grid: int = 256
    steps: int = 64
    hole_safety: float = 0.9
    max_hole: float = 0.5
    verify_samples: int = 2000
    radial_tol: float = 1e-3
    flow_tol: float = 1e-2
    seed: int = 42


@dataclass
class CorrectorResult:
    map: PlaneMap
    report: dict = field(default_factory=dict)

    def __call__(self, pts):
        return self.map(pts)


def tile_corrector(T: StarPolygon, parts, values, config: CorrectorConfig | None = None,
                   verify: bool = True) -> CorrectorResult:
    """Boundary-fixing homeomorphism of T with Jac = (|T| / int_T f) * f for f piecewise constant on parts."""
    cfg = config or CorrectorConfig()
    parts = list(parts)
    f = PiecewiseConstantDensity(parts, values)
    total = sum(p.area for p in parts)
    if abs(total - T.area) > 1e-9 * T.area:
        raise ValidationError("parts do not partition T (areas %.12g vs %.12g)" % (total, T.area))
    scale = T.area / f.integral()
    fv = f.values * scale
    report = {"scale": scale, "values": fv.tolist(), "max_over_min": float(fv.max() / fv.min())}
    if np.all(fv == fv[0]) or fv.max() / fv.min() - 1.0 < 1e-14:
        report["stages"] = []
        return CorrectorResult(PlaneMap.identity(), report)

    fn = PiecewiseConstantDensity(parts, fv)
    wit = find_witness_point(T, parts, r=cfg.r)
    r = wit.r_used
    S = T.recentered(wit.q)
    shrunk = [contract(p, r) for p in parts]
    gap = min(min_elevation_over(S, p.vertices) for p in shrunk)
    r_in = min(cfg.hole_safety * gap, cfg.max_hole)
    A = StarAnnulus(S, r_in)
    f2 = build_f2(T, parts, fn, r)
    f3 = build_f3(T, S, A, f2, target=T.area, contracted_parts=shrunk)
    psi1 = RadialLayer(parts, [(Profile.constant(v), prof) for v, prof in zip(fv, f2.profiles)])
    psi2 = AnnulusFlowLayer(A, f2, f3, grid=cfg.grid, steps=cfg.steps)
    psi3 = RadialLayer([S], [(f3.profiles[0], Profile.constant(1.0))])
    report.update({
        "q": wit.q.tolist(), "r": r, "r_in": r_in, "hat_heights": f2.excess.tolist(), "ring_peak": f3.peak,
        "f2_max_over_min": f2.max / f2.min, "f3_max_over_min": f3.max / f3.min,
        "grid_scale": psi2.grid_scale, "flow_mass_mismatch": psi2.mass_mismatch,
    })
    # empirical exponents k with max/min of f2, f3 = (max/min of f)^k
    spread = math.log(report["max_over_min"])
    report["k1_empirical"] = math.log(report["f2_max_over_min"]) / spread
    report["k2_empirical"] = math.log(report["f3_max_over_min"]) / spread
    pm = PlaneMap([psi1, psi2, psi3], name="tile_corrector")
    result = CorrectorResult(pm, report)
    result.f = fn
    result.f2, result.f3, result.annulus, result.witness = f2, f3, A, wit
    if verify:
        stages = verify_stages(result, T, cfg)
        report["stages"] = stages
        for st in stages:
            if st["median"] > st["tol"]:
                raise NumericError("corrector stage %s residual %.3g above %.3g" % (st["name"], st["median"], st["tol"]))
    return result


def sample_star(T: StarPolygon, n: int, rng, margin: float = 0.0, parts=()):
    """Uniform points of T, optionally keeping `margin` away from T's and the parts' boundaries."""
    from .geometry import distance_to_boundary

    lo, hi = T.vertices.min(axis=0), T.vertices.max(axis=0)
    out = []
    got = 0
    while got < n:
        cand = lo + (hi - lo) * rng.random((max(64, 2 * (n - got)), 2))
        ok = T.elevation(cand) < 1.0
        if margin > 0:
            ok &= distance_to_boundary(T.vertices, cand) > margin
            for p in parts:
                ok &= distance_to_boundary(p.vertices, cand) > margin
        cand = cand[ok]
        out.append(cand)
        got += len(cand)
    return np.concatenate(out)[:n]


def verify_stages(result: CorrectorResult, T: StarPolygon, cfg: CorrectorConfig, n=None):
    """Median relative Jacobian residual of each layer against its target ratio."""
    rng = np.random.default_rng(cfg.seed)
    n = n or cfg.verify_samples
    h = 1e-6 * T.diameter
    parts = result.f.parts
    x = sample_star(T, n, rng, margin=1e-3 * T.inradius, parts=parts)
    psi1, psi2, psi3 = result.map.layers
    f, f2, f3 = result.f, result.f2, result.f3
    out = []
    y1 = psi1(x)
    J = numerical_jacobian(psi1, x, h)
    out.append({"name": "psi1", "tol": cfg.radial_tol, **residual_summary(J / (f(x) / f2(y1)) - 1)})
    y2 = psi2(y1)
    J = numerical_jacobian(psi2, y1, h)
    out.append({"name": "psi2", "tol": cfg.flow_tol, **residual_summary(J / (f2(y1) / f3(y2)) - 1)})
    y3 = psi3(y2)
    J = numerical_jacobian(psi3, y2, h)
    out.append({"name": "psi3", "tol": cfg.radial_tol, **residual_summary(J / f3(y2) - 1)})
    bd = boundary_samples(T.vertices, 1000)
    out.append({"name": "boundary", "tol": 1e-6, "median": float(np.max(np.hypot(*(result.map(bd) - bd).T))),
                "p90": float("nan"), "max": float(np.max(np.hypot(*(result.map(bd) - bd).T))), "count": 1000})
    return out
