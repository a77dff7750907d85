"""Substitution systems: rules, patch generation, censuses and Perron-Frobenius data.

Counts are exact Python integers.  The dominant-eigenvalue bookkeeping that
compares counts with rho*|T| is done in mpmath because the discrepancy
shrinks like (lambda2/lambda)^m relative to the count and is lost to double
rounding well before m = 20.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import mpmath as mp
import numpy as np
from shapely.geometry import Polygon
from shapely.ops import unary_union

from .errors import NumericError, ResourceError, ValidationError
from .geometry import StarPolygon

mp.mp.dps = 60

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Similarity:
    """x -> translation + scale * Rot(rotation) @ diag(1, -1 if reflect) @ x"""

    scale: float = 1.0
    rotation: float = 0.0
    reflect: bool = False
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("similarity scale must be positive")

    @cached_property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        m = self.scale * np.array([[c, -s], [s, c]])
        if self.reflect:
            m = m @ np.diag([1.0, -1.0])
        return m

    @property
    def offset(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=float)

    def apply(self, pts):
        return np.asarray(pts, dtype=float) @ self.matrix.T + self.offset

    def apply_inverse(self, pts):
        return (np.asarray(pts, dtype=float) - self.offset) @ np.linalg.inv(self.matrix).T

    def compose(self, other: "Similarity") -> "Similarity":
        """self after other."""
        m = self.matrix @ other.matrix
        t = self.matrix @ other.offset + self.offset
        return Similarity.from_matrix(m, t)

    def inverse(self) -> "Similarity":
        mi = np.linalg.inv(self.matrix)
        return Similarity.from_matrix(mi, -mi @ self.offset)

    @classmethod
    def from_matrix(cls, m, t) -> "Similarity":
        m = np.asarray(m, dtype=float)
        det = float(np.linalg.det(m))
        reflect = det < 0
        scale = math.sqrt(abs(det))
        rm = m @ np.diag([1.0, -1.0]) if reflect else m
        rot = math.atan2(rm[1, 0], rm[0, 0])
        return cls(scale, rot, bool(reflect), (float(t[0]), float(t[1])))

    @classmethod
    def fit(cls, src, dst) -> "Similarity":
        """Similarity taking three (or more) source points onto destination points."""
        src = np.asarray(src, dtype=float)
        dst = np.asarray(dst, dtype=float)
        a = np.c_[src, np.ones(len(src))]
        sol, *_ = np.linalg.lstsq(a, dst, rcond=None)
        m, t = sol[:2].T, sol[2]
        out = cls.from_matrix(m, t)
        if not np.allclose(out.apply(src), dst, atol=1e-9 * max(1.0, np.abs(dst).max())):
            raise ValidationError("point correspondence is not a similarity")
        return out

    def to_dict(self):
        return {"scale": self.scale, "rotation": self.rotation, "reflect": self.reflect,
                "translate": list(self.translation)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("scale", 1.0)), float(d.get("rotation", 0.0)), bool(d.get("reflect", False)),
                   tuple(float(x) for x in d.get("translate", (0.0, 0.0))))


def dilation(k: float) -> Similarity:
    return Similarity(scale=k)


@dataclass(frozen=True)
class Prototile:
    id: int
    shape: StarPolygon
    label: str = ""


@dataclass(frozen=True)
class Child:
    type: int
    placement: Similarity  # prototile coords -> coords of the xi-inflated parent


@dataclass
class SubstitutionSystem:
    name: str
    prototiles: list
    xi: float
    rules: list  # rules[j] = children of parent type j

    @property
    def n_types(self) -> int:
        return len(self.prototiles)

    @cached_property
    def matrix(self) -> list:
        return substitution_matrix(self)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([p.shape.area for p in self.prototiles])

    def child_polygons(self, parent: int):
        """Children of `parent` in the parent's own (uninflated) prototile coordinates."""
        shrink = dilation(1.0 / self.xi)
        out = []
        for ch in self.rules[parent]:
            sim = shrink.compose(ch.placement)
            out.append(sim.apply(self.prototiles[ch.type].shape.vertices))
        return out

    def child_star_polygons(self, parent: int):
        shrink = dilation(1.0 / self.xi)
        out = []
        for ch in self.rules[parent]:
            sim = shrink.compose(ch.placement)
            shape = self.prototiles[ch.type].shape
            out.append(StarPolygon(sim.apply(shape.vertices), sim.apply(shape.center[None])[0]))
        return out


# -- matrices -----------------------------------------------------------------


def substitution_matrix(sys: SubstitutionSystem) -> list:
    n = sys.n_types
    m = [[0] * n for _ in range(n)]
    for j, children in enumerate(sys.rules):
        for ch in children:
            m[ch.type][j] += 1
    return m


def is_primitive(M) -> bool:
    a = np.asarray(M) > 0
    n = len(a)
    p = a.copy()
    for _ in range((n - 1) ** 2 + 1):
        if p.all():
            return True
        p = (p.astype(int) @ a.astype(int)) > 0
    return bool(p.all())


def _int_matvec(M, v):
    return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]


def count_tiles(sys: SubstitutionSystem, root_type: int, m: int) -> list:
    """Exact counts by type of level-0 tiles in a level-m supertile."""
    if m < 0:
        raise ValueError("level must be non-negative")
    v = [0] * sys.n_types
    v[root_type] = 1
    for _ in range(m):
        v = _int_matvec(sys.matrix, v)
    return v


# -- validation -----------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_system(sys: SubstitutionSystem, tol: float = 1e-9, strict: bool = True) -> ValidationReport:
    report = ValidationReport()
    if not sys.xi > 1:
        report.violations.append("xi must exceed 1")
    for j, proto in enumerate(sys.prototiles):
        parent = Polygon(sys.xi * proto.shape.vertices)
        children = []
        area_sum = 0.0
        for c, ch in enumerate(sys.rules[j]):
            if not 0 <= ch.type < sys.n_types:
                report.violations.append("rule %d child %d: unknown type %r" % (j, c, ch.type))
                continue
            poly = Polygon(ch.placement.apply(sys.prototiles[ch.type].shape.vertices))
            children.append((c, poly))
            area_sum += poly.area
            outside = poly.difference(parent).area
            if outside > tol * parent.area:
                report.violations.append("rule %d child %d: sticks out of parent by area %.3g" % (j, c, outside))
        if abs(area_sum - parent.area) > tol * parent.area:
            report.violations.append(
                "rule %d: area mismatch xi^2|P|=%.12g vs children %.12g" % (j, parent.area, area_sum))
        for a in range(len(children)):
            for b in range(a + 1, len(children)):
                ov = children[a][1].intersection(children[b][1]).area
                if ov > tol * parent.area:
                    report.violations.append(
                        "rule %d: overlap %.3g between children %d and %d" % (j, ov, children[a][0], children[b][0]))
        if children:
            cover = unary_union([p for _, p in children]).area
            if abs(cover - parent.area) > tol * parent.area:
                report.violations.append("rule %d: children cover %.12g of %.12g" % (j, cover, parent.area))
    if not is_primitive(substitution_matrix(sys)):
        report.violations.append("substitution matrix is not primitive")
    if strict and report.violations:
        raise ValidationError("; ".join(report.violations))
    return report


# -- patches and addresses -------------------------------------------------------


@dataclass(frozen=True)
class SupertileAddress:
    root_type: int
    level: int
    path: tuple = ()


@dataclass(frozen=True)
class PatchTile:
    type: int
    placement: Similarity
    address: SupertileAddress


@dataclass
class Patch:
    system: str
    root_type: int
    level: int
    tiles: list

    def polygons(self, sys: SubstitutionSystem):
        return [t.placement.apply(sys.prototiles[t.type].shape.vertices) for t in self.tiles]

    def to_dict(self, sys: SubstitutionSystem) -> dict:
        return {
            "format": "startile.patch/1",
            "system": self.system,
            "root_type": self.root_type,
            "level": self.level,
            "tiles": [
                {
                    "type": t.type,
                    "label": sys.prototiles[t.type].label,
                    "path": list(t.address.path),
                    "placement": t.placement.to_dict(),
                    "vertices": np.round(t.placement.apply(sys.prototiles[t.type].shape.vertices), 12).tolist(),
                    "center": np.round(t.placement.apply(sys.prototiles[t.type].shape.center[None])[0], 12).tolist(),
                }
                for t in self.tiles
            ],
        }


def resolve_address(sys: SubstitutionSystem, address: SupertileAddress):
    """Type and world placement of the tile reached by following `address`."""
    if len(address.path) > address.level:
        raise ValidationError("address path longer than its level")
    sim = dilation(sys.xi ** address.level)
    t = address.root_type
    shrink = dilation(1.0 / sys.xi)
    for idx in address.path:
        children = sys.rules[t]
        if not 0 <= idx < len(children):
            raise ValidationError("address index %d out of range for type %d" % (idx, t))
        ch = children[idx]
        sim = sim.compose(shrink).compose(ch.placement)
        t = ch.type
    return t, sim


def inflate_patch(sys: SubstitutionSystem, root_type: int, m: int, max_tiles: int = 2_000_000) -> Patch:
    total = sum(count_tiles(sys, root_type, m))
    if total > max_tiles:
        raise ResourceError("level %d supertile has %d tiles, above the cap %d" % (m, total, max_tiles))
    shrink = dilation(1.0 / sys.xi)
    steps = [[shrink.compose(ch.placement) for ch in sys.rules[j]] for j in range(sys.n_types)]
    frontier = [(root_type, dilation(sys.xi ** m), ())]
    for _ in range(m):
        nxt = []
        for t, sim, path in frontier:
            for i, ch in enumerate(sys.rules[t]):
                nxt.append((ch.type, sim.compose(steps[t][i]), path + (i,)))
        frontier = nxt
    tiles = [PatchTile(t, sim, SupertileAddress(root_type, m, path)) for t, sim, path in frontier]
    return Patch(sys.name, root_type, m, tiles)


# -- Perron-Frobenius statistics ------------------------------------------------


@dataclass
class PFStats:
    lam: float
    lambda2_abs: float
    rho: float
    right_vec: np.ndarray
    left_vec: np.ndarray
    rho_by_type: np.ndarray
    power_iteration_lambda: float


def pf_stats(sys: SubstitutionSystem) -> PFStats:
    M = np.asarray(sys.matrix, dtype=float)
    w, vr = np.linalg.eig(M)
    wl, vl = np.linalg.eig(M.T)
    i = int(np.argmax(w.real))
    lam = float(w[i].real)
    if not np.all(np.isfinite(w)):
        raise NumericError("eigen-solver returned non-finite values")
    mods = np.sort(np.abs(w))[::-1]
    lambda2 = float(mods[1]) if len(mods) > 1 else 0.0
    v = np.abs(vr[:, i].real)
    u = np.abs(vl[:, int(np.argmax(wl.real))].real)
    v = v / v.sum()
    u = u / u.sum()
    rho_t = v.sum() * u / (u @ v * sys.areas)
    # power iteration cross-check of the dominant eigenvalue
    x = np.ones(len(M))
    pl = 0.0
    for _ in range(500):
        y = M @ x
        pl = float(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
    if abs(pl - lam) > 1e-8 * lam:
        raise NumericError("power iteration disagrees with eigen-solver: %.12g vs %.12g" % (pl, lam))
    return PFStats(lam, lambda2, float(np.mean(rho_t)), v, u, rho_t, pl)


@dataclass(frozen=True)
class _ExactPF:
    lam: mp.mpf
    lambda2_abs: mp.mpf
    weight: tuple  # rho*|P_t| for each type


_PF_CACHE: dict = {}


def exact_pf(sys: SubstitutionSystem) -> _ExactPF:
    """High-precision PF data taken from the integer matrix alone."""
    key = json.dumps(sys.matrix)
    if key in _PF_CACHE:
        return _PF_CACHE[key]
    M = sys.matrix
    n = len(M)
    if n == 1:
        out = _ExactPF(mp.mpf(M[0][0]), mp.mpf(0), (mp.mpf(1),))
    else:
        E, EL, ER = mp.eig(mp.matrix(M), left=True, right=True)
        idx = max(range(n), key=lambda k: mp.re(E[k]))
        lam = mp.re(E[idx])
        v = [abs(mp.re(ER[k, idx])) for k in range(n)]
        u = [abs(mp.re(EL[idx, k])) for k in range(n)]
        uv = mp.fsum(a * b for a, b in zip(u, v))
        ones_v = mp.fsum(v)
        mods = sorted((abs(e) for e in E), reverse=True)
        out = _ExactPF(lam, mods[1], tuple(ones_v * ut / uv for ut in u))
    _PF_CACHE[key] = out
    return out


def discrepancy(sys: SubstitutionSystem, root_type: int, m: int):
    """rho*|T_m| - #tiles for a level-m supertile of root_type (mpmath)."""
    pf = exact_pf(sys)
    count = sum(count_tiles(sys, root_type, m))
    return pf.lam ** m * pf.weight[root_type] - count


def _mass_and_reference(sys, root_type, m, f):
    counts = count_tiles(sys, root_type, m)
    pf = exact_pf(sys)
    ref = pf.lam ** m * pf.weight[root_type]  # rho * |T|
    if f is None:
        mass = mp.mpf(sum(counts))
    else:
        vals = list(f)
        mass = mp.fsum(mp.mpf(c) * mp.mpf(float(vals[i])) * mp.mpf(float(sys.areas[i]))
                       for i, c in enumerate(counts))
    return mass, ref


def e_excess(sys: SubstitutionSystem, root_type: int, m: int, f=None):
    """e(T) - 1 in high precision; f=None means the reciprocal-area density."""
    mass, ref = _mass_and_reference(sys, root_type, m, f)
    return abs(ref - mass) / min(ref, mass)


def e_value(sys: SubstitutionSystem, root_type: int, m: int, f=None) -> float:
    mass, ref = _mass_and_reference(sys, root_type, m, f)
    return float(max(ref / mass, mass / ref))


def E_of_m(sys: SubstitutionSystem, m: int, f=None) -> float:
    return max(e_value(sys, t, m, f) for t in range(sys.n_types))


def E_excess(sys: SubstitutionSystem, m: int, f=None):
    return max(e_excess(sys, t, m, f) for t in range(sys.n_types))


@dataclass
class ConvergenceStats:
    levels: list
    E_values: list
    E_excess: list
    partial_products: list
    epsilon: float | None
    eigen_ratio: float
    decay_constant: float | None = None
    decay_from: int | None = None
    residuals: dict = field(default_factory=dict)
    bilip: dict = field(default_factory=dict)


def fit_decay(levels, excess, m_from: int = 4):
    xs, ys = [], []
    for m, e in zip(levels, excess):
        if m >= m_from and e > 0:
            xs.append(m)
            ys.append(float(mp.log(e)))
    if len(xs) < 2:
        return None
    slope = np.polyfit(xs, ys, 1)[0]
    return float(math.exp(slope))


def product_report(sys: SubstitutionSystem, M_max: int, f=None, m_from: int = 4) -> ConvergenceStats:
    levels = list(range(1, M_max + 1))
    excess = [E_excess(sys, m, f) for m in levels]
    E = [float(1 + x) for x in excess]
    prods, acc = [], mp.mpf(1)
    for x in excess:
        acc *= 1 + x
        prods.append(float(acc))
    pf = exact_pf(sys)
    ratio = float(pf.lambda2_abs / pf.lam)
    stats = ConvergenceStats(levels, E, [float(x) for x in excess], prods, fit_decay(levels, excess, m_from), ratio)
    if f is None and pf.lambda2_abs > 0:
        stats.decay_constant, stats.decay_from = decay_bound(sys, m_fit=m_from, m_max=max(M_max, m_from))
    return stats


def decay_bound(sys: SubstitutionSystem, m_fit: int = 4, m_max: int = 20, slack: float = 0.10):
    """Fit C in |rho|T_m| - count| <= C * lambda2^m at m_fit; report the first m from which it holds."""
    pf = exact_pf(sys)
    if pf.lambda2_abs == 0:
        return 0.0, 0
    C = max(abs(discrepancy(sys, t, m_fit)) / pf.lambda2_abs ** m_fit for t in range(sys.n_types))
    holds_from = None
    for m in range(m_max, -1, -1):
        ok = all(abs(discrepancy(sys, t, m)) <= (1 + slack) * C * pf.lambda2_abs ** m for t in range(sys.n_types))
        if not ok:
            break
        holds_from = m
    return float(C), holds_from


# -- built-in systems -----------------------------------------------------------


def _star(vertices, center=None):
    v = np.asarray(vertices, dtype=float)
    if center is None:
        center = v.mean(axis=0)
    return StarPolygon(v, center)


def chair_system() -> SubstitutionSystem:
    L = _star([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], (0.5, 0.5))
    rules = [[
        Child(0, Similarity(translation=(0.0, 0.0))),
        Child(0, Similarity(translation=(1.0, 1.0))),
        Child(0, Similarity(rotation=math.pi / 2, translation=(4.0, 0.0))),
        Child(0, Similarity(rotation=-math.pi / 2, translation=(0.0, 4.0))),
    ]]
    return SubstitutionSystem("chair", [Prototile(0, L, "chair")], 2.0, rules)


def squares_system() -> SubstitutionSystem:
    sq = _star([(0, 0), (1, 0), (1, 1), (0, 1)])
    rules = [[Child(0, Similarity(translation=t)) for t in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))]]
    return SubstitutionSystem("squares", [Prototile(0, sq, "square")], 2.0, rules)


def penrose_system() -> SubstitutionSystem:
    """Robinson triangles: acute (36-72-72, legs phi, base 1) and obtuse (108-36-36, legs 1, base phi).

    Vertex order of each prototile is (base b, base c, apex); a child is
    given by the images of (b, c, apex) and its placement may reflect, which
    records the chirality of the child.
    """
    phi = GOLDEN
    h_a = math.sqrt(phi * phi - 0.25)
    h_o = math.sqrt(1.0 - phi * phi / 4.0)
    acute = _star([(0, 0), (1, 0), (0.5, h_a)])
    obtuse = _star([(0, 0), (phi, 0), (phi / 2, h_o)])
    A = phi * acute.vertices
    O = phi * obtuse.vertices
    ref = {0: acute.vertices, 1: obtuse.vertices}

    def child(t, b, c, apex):
        return Child(t, Similarity.fit(ref[t], np.array([b, c, apex])))

    b, c, a = A
    Q = a + (b - a) / phi
    R = c + (a - c) / phi
    acute_rule = [child(0, b, Q, c), child(0, R, Q, c), child(1, Q, a, R)]
    e, g, d = O
    R2 = g + (e - g) / phi
    obtuse_rule = [child(0, R2, d, g), child(1, e, d, R2)]
    protos = [Prototile(0, acute, "acute"), Prototile(1, obtuse, "obtuse")]
    return SubstitutionSystem("penrose", protos, phi, [acute_rule, obtuse_rule])


BUILTIN = {"chair": chair_system, "squares": squares_system, "penrose": penrose_system}


# -- rule files --------------------------------------------------------------------


def system_to_dict(sys: SubstitutionSystem) -> dict:
    return {
        "name": sys.name,
        "xi": sys.xi,
        "prototiles": [
            {"id": p.id, "label": p.label, "vertices": p.shape.vertices.tolist(), "center": p.shape.center.tolist()}
            for p in sys.prototiles
        ],
        "rules": [
            {"parent": j, "children": [dict(type=ch.type, **ch.placement.to_dict()) for ch in children]}
            for j, children in enumerate(sys.rules)
        ],
    }


def system_from_dict(d: dict, validate: bool = True) -> SubstitutionSystem:
    try:
        raw = sorted(d["prototiles"], key=lambda p: p["id"])
        ids = [p["id"] for p in raw]
        if ids != list(range(len(raw))):
            raise ValidationError("prototile ids must be 0..n-1, got %s" % ids)
        protos = []
        for p in raw:
            try:
                shape = StarPolygon(np.asarray(p["vertices"], dtype=float), np.asarray(p["center"], dtype=float))
            except ValidationError as exc:
                raise ValidationError("prototile %s: %s" % (p["id"], exc)) from None
            protos.append(Prototile(p["id"], shape, p.get("label", str(p["id"]))))
        rules = [[] for _ in protos]
        for r in d["rules"]:
            rules[int(r["parent"])] = [Child(int(c["type"]), Similarity.from_dict(c)) for c in r["children"]]
        sys = SubstitutionSystem(d.get("name", "custom"), protos, float(d["xi"]), rules)
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError("malformed rule file: %r" % (exc,)) from None
    if validate:
        validate_system(sys)
    return sys


def get_system(name_or_path) -> SubstitutionSystem:
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]()
    path = Path(name_or_path)
    if not path.exists():
        raise ValidationError("unknown system %r (built-ins: %s)" % (name_or_path, ", ".join(BUILTIN)))
    return system_from_dict(json.loads(path.read_text()))
