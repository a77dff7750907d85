"""`tile` command line: patches, renders, statistics, correctors and nets."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys as _sys

import numpy as np

from .config import Config, thread_cap
from .corrections import CorrectorConfig, sample_star
from .errors import NumericError, ResourceError, ValidationError
from .geometry import StarPolygon
from .maps import PlaneMap, numerical_jacobian, residual_summary
from .nets import SeparatedNet, auto_side, build_tau_Y, covering_radius, separation
from .realize import bilip_estimate, build_phi_m, canonical_corrector, sample_working_region
from .starmap import ElevationLayer, ElevationMap, disk_coords, distance_to_break_rays, eval_H
from .substitution import dilation, get_system, inflate_patch, pf_stats, product_report
from .svg import grid_lines, polar_grid, render_svg

FMT = "%.12g"


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return FMT % x


def _write_text(path, text):
    if path in (None, "-"):
        _sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv_text(version: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# %s\n" % version)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _load_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError("cannot read %s: %s" % (what, exc)) from exc
    if not text.strip():
        raise ValidationError("empty %s" % what)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("%s is not valid JSON: %s" % (what, exc)) from exc


def _config(args) -> Config:
    cfg = Config(seed=args.seed)
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    if getattr(args, "grid", None):
        cfg.corrector = CorrectorConfig(grid=args.grid)
    return cfg


# -- subcommands ---------------------------------------------------------------------------


def cmd_gen(args):
    system = get_system(args.system)
    patch = inflate_patch(system, args.root, args.level, max_tiles=args.max_tiles)
    d = patch.to_dict(system)
    root = system.prototiles[args.root].shape
    d["outline"] = np.round(dilation(system.xi ** args.level).apply(root.vertices), 12).tolist()
    _write_text(args.out, json.dumps(d) + "\n")
    print("%d tiles" % len(patch.tiles), file=_sys.stderr)


def _patch_from_file(path):
    d = _load_json(path, "patch")
    tiles = d.get("tiles") if isinstance(d, dict) else None
    if not tiles:
        raise ValidationError("empty patch")
    polys = [np.asarray(t["vertices"], dtype=float) for t in tiles]
    types = [int(t.get("type", 0)) for t in tiles]
    return d, polys, types


def cmd_render(args):
    d, polys, types = _patch_from_file(args.input)
    overlays = []
    if args.overlay_levels:
        system = get_system(d["system"])
        R = build_phi_m(system, int(d["root_type"]), args.overlay_levels, working_level=int(d["level"]),
                        config=_config(args))
        allp = np.concatenate(polys)
        for line in grid_lines(allp.min(axis=0), allp.max(axis=0), n=args.overlay_lines):
            inside = R.hierarchy.contains(line)
            if inside.sum() > 1:
                overlays.append(R(line[inside]))
    _write_text(args.out, render_svg(polys, types, overlays, title="%s level %s" % (d.get("system"), d.get("level"))))


def cmd_stats(args):
    system = get_system(args.system)
    st = product_report(system, args.levels, m_from=args.fit_from)
    rows = []
    for m, E, ex, p in zip(st.levels, st.E_values, st.E_excess, st.partial_products):
        rows.append([m, float(E), float(ex), float(p), st.epsilon if st.epsilon is not None else float("nan"),
                     float(st.eigen_ratio)])
    header = ["level", "E", "E_minus_1", "product", "epsilon_fit", "lambda2_over_lambda"]
    _write_text(args.out, _csv_text("startile.stats/1 system=%s" % system.name, header, rows))


def _domain_from_args(args) -> StarPolygon:
    if args.domain:
        d = _load_json(args.domain, "domain")
        if "vertices" not in d:
            raise ValidationError("domain file needs vertices")
        return StarPolygon(np.asarray(d["vertices"], dtype=float), np.asarray(d.get("center"), dtype=float)
                           if d.get("center") is not None else np.mean(d["vertices"], axis=0))
    system = get_system(args.system)
    return system.prototiles[args.type].shape


def cmd_starmap(args):
    T = _domain_from_args(args)
    em = ElevationMap(T)
    rng = np.random.default_rng(args.seed)
    x = rng.random((2 * args.samples, 2)) * 2 - 1
    x = x[np.hypot(*x.T) < 0.999][: args.samples]
    J = numerical_jacobian(ElevationLayer(em), x, 1e-6)
    y = eval_H(em, x)
    s, t = disk_coords(em, y)
    back = s[:, None] * np.stack([np.cos(t), np.sin(t)], axis=1)
    keep = distance_to_break_rays(em.disk_break_angles, x) > 1e-3
    res = residual_summary(J[keep] / em.normalization - 1)
    print(json.dumps({"area": T.area, "jacobian": res, "round_trip_max": float(np.max(np.abs(back - x))),
                      "excluded_fraction": float(1 - keep.mean()), "break_angles": em.disk_break_angles.tolist()},
                     sort_keys=True))
    if args.out:
        lines = [eval_H(em, ln) for ln in polar_grid(args.grid // 8 or 1, args.grid // 2 or 4)]
        _write_text(args.out, render_svg([T.vertices], [0], lines, points=[T.center], title="elevation grid"))


def _parse_supertile(text):
    try:
        t, m = text.split(":")
        return int(t), int(m)
    except ValueError as exc:
        raise ValidationError("supertile must look like TYPE:LEVEL, got %r" % text) from exc


def cmd_correct(args):
    system = get_system(args.system)
    t, m = _parse_supertile(args.supertile)
    if not 0 <= t < system.n_types or m < 1:
        raise ValidationError("supertile %s out of range" % args.supertile)
    cfg = _config(args)
    cfg.corrector.verify_samples = args.samples
    corr, report = canonical_corrector(system, m, t, cfg)
    T = system.prototiles[t].shape
    pm = corr if corr is not None else PlaneMap.identity()
    rows = []
    for st in report.get("stages", []):
        rows.append([st["name"], float(st["median"]), float(st["p90"]), float(st["max"]), st["count"], float(st["tol"])])
    if corr is not None:
        parts = system.child_star_polygons(t)
        rng = np.random.default_rng(cfg.seed)
        x = sample_star(T, args.samples, rng, margin=1e-3 * T.inradius, parts=parts)
        f = np.asarray(report["values"])
        idx = np.full(len(x), -1)
        for i, p in enumerate(parts):
            idx[(idx < 0) & (p.elevation(x) <= 1)] = i
        J = numerical_jacobian(pm, x, 1e-6 * T.diameter)
        total = residual_summary(J / f[idx] - 1)
        rows.append(["total", total["median"], total["p90"], total["max"], total["count"], 2e-2])
    else:
        rows.append(["total", 0.0, 0.0, 0.0, 0, 2e-2])
    header = ["stage", "median", "p90", "max", "count", "tolerance"]
    _write_text(args.report, _csv_text("startile.correct/1 system=%s type=%d level=%d" % (system.name, t, m),
                                       header, rows))
    if args.svg:
        em = ElevationMap(T)
        lines = [pm(eval_H(em, ln)) for ln in polar_grid(12, 48)]
        _write_text(args.svg, render_svg(system.child_polygons(t), [c.type for c in system.rules[t]], lines,
                                         title="corrector type %d level %d" % (t, m)))


def cmd_realize(args):
    system = get_system(args.system)
    cfg = _config(args)
    cfg.working_level = args.working_level
    R = build_phi_m(system, args.root, args.levels, config=cfg)
    rng = np.random.default_rng(cfg.seed)
    pts, excluded = sample_working_region(R.hierarchy, args.samples, rng, cfg.boundary_margin)
    rho = pf_stats(system).rho
    st = product_report(system, max(args.levels, 1))
    rows = []
    for m in range(1, args.levels + 1):
        phi = R.phi(m)
        img = phi(pts)
        J = numerical_jacobian(phi, pts, cfg.fd_step)
        f = R.f_tau(pts)
        tel = residual_summary(J / (f / R.f_level(m, img)) - 1)
        vs = residual_summary(J * rho / f - 1)
        bl = bilip_estimate(phi, pairs=args.pairs, rng=np.random.default_rng(cfg.seed + m), points=pts)
        rows.append([m, float(st.E_values[m - 1]), float(st.partial_products[m - 1]), float(tel["median"]),
                     float(tel["p90"]), float(bl.lower), float(vs["median"]), float(excluded)])
    header = ["level", "E", "product", "residual_median", "residual_p90", "bilip_lower", "rho_residual_median",
              "excluded_fraction"]
    _write_text(args.report, _csv_text("startile.realize/1 system=%s root=%d working_level=%d samples=%d seed=%d"
                                       % (system.name, args.root, R.hierarchy.level, args.samples, cfg.seed),
                                       header, rows))
    if args.svg:
        root = R.hierarchy.root_polygon()
        lines = []
        for ln in grid_lines(root.min(axis=0), root.max(axis=0), n=24, samples=200):
            inside = R.hierarchy.contains(ln)
            if inside.sum() > 1:
                lines.append(R(ln[inside]))
        polys = [R.hierarchy.polygon(0, i) for i in range(R.hierarchy.count(0))]
        _write_text(args.svg, render_svg(polys, R.hierarchy.types[0], lines, title="phi_%d" % args.levels))


def cmd_net(args):
    d, polys, _ = _patch_from_file(args.input)
    centers = np.array([t["center"] for t in d["tiles"]], dtype=float)
    region = np.asarray(d["outline"], dtype=float) if "outline" in d else None
    net = SeparatedNet(centers, separation(centers), covering_radius(centers, polys), region)
    _write_text(args.out, json.dumps(net.to_dict()) + "\n")
    print("%d points, r_sep %s, R_cov %s" % (len(centers), _num(net.r_sep), _num(net.R_cov)), file=_sys.stderr)


def cmd_tauy(args):
    d = _load_json(args.net, "net")
    net = SeparatedNet.from_dict(d)
    if len(net.points) == 0:
        raise ValidationError("empty net")
    if args.region:
        region = np.asarray(_load_json(args.region, "region")["vertices"], dtype=float)
    elif net.region is not None:
        region = net.region
    else:
        from scipy.spatial import ConvexHull

        pts = net.points
        if len(pts) < 3:
            raise ValidationError("net has no region; pass --region")
        region = pts[ConvexHull(pts).vertices]
    if not np.isfinite(net.r_sep):
        net.r_sep = separation(net.points)
    side = auto_side(net.r_sep) if args.side == "auto" else float(args.side)
    tau = build_tau_Y(net, region, side=side, exact_distance=args.exact)
    if args.out:
        _write_text(args.out, json.dumps(tau.to_dict()) + "\n")
    if args.svg:
        corners = tau.square_corners(np.arange(len(tau.squares)))
        _write_text(args.svg, render_svg(list(corners), tau.owner % 8, points=net.points, stroke=0.0,
                                         title="tau_Y side %s" % _num(side)))
    print("%d squares, %d tiles, side %s" % (len(tau.squares), sum(len(t) > 0 for t in tau.tiles), _num(side)),
          file=_sys.stderr)


# -- parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tile", description="Substitution tilings and prescribed-Jacobian maps.")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: TILE_THREADS or CPU count)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write the tiles of a level-m supertile as JSON")
    g.add_argument("--system", default="penrose", help="built-in name or rule-file path")
    g.add_argument("--level", type=int, required=True)
    g.add_argument("--root", type=int, default=0)
    g.add_argument("--max-tiles", type=int, default=2_000_000)
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("render", help="draw a patch as SVG")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", default="-")
    r.add_argument("--overlay-levels", type=int, default=0, help="overlay a grid deformed by phi_L")
    r.add_argument("--overlay-lines", type=int, default=16)
    r.set_defaults(func=cmd_render)

    s = sub.add_parser("stats", help="E(m), partial products and fitted decay as CSV")
    s.add_argument("--system", default="penrose")
    s.add_argument("--levels", type=int, default=12)
    s.add_argument("--fit-from", type=int, default=4)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_stats)

    m = sub.add_parser("starmap", help="check and draw the disk-to-star map of a domain")
    m.add_argument("--domain", help="JSON with vertices and center")
    m.add_argument("--system", default="penrose")
    m.add_argument("--type", type=int, default=0)
    m.add_argument("--grid", type=int, default=64)
    m.add_argument("--samples", type=int, default=10_000)
    m.add_argument("--out")
    m.set_defaults(func=cmd_starmap)

    c = sub.add_parser("correct", help="build one supertile corrector and report stage residuals")
    c.add_argument("--system", default="penrose")
    c.add_argument("--supertile", required=True, help="TYPE:LEVEL")
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--grid", type=int, default=256)
    c.add_argument("--report", default="-")
    c.add_argument("--svg")
    c.set_defaults(func=cmd_correct)

    z = sub.add_parser("realize", help="compose correctors over a working supertile and verify")
    z.add_argument("--system", default="penrose")
    z.add_argument("--levels", type=int, default=3)
    z.add_argument("--root", type=int, default=0)
    z.add_argument("--working-level", type=int, default=6)
    z.add_argument("--samples", type=int, default=10_000)
    z.add_argument("--pairs", type=int, default=5000)
    z.add_argument("--grid", type=int, default=256)
    z.add_argument("--report", default="-")
    z.add_argument("--svg")
    z.set_defaults(func=cmd_realize)

    n = sub.add_parser("net", help="one point per tile of a patch")
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--out", default="-")
    n.set_defaults(func=cmd_net)

    y = sub.add_parser("tauy", help="grid-square tiling around a net")
    y.add_argument("--net", required=True)
    y.add_argument("--side", default="auto")
    y.add_argument("--region", help="JSON with region vertices (default: the net's stored region)")
    y.add_argument("--exact", action="store_true", help="exact square-to-point distance")
    y.add_argument("--out")
    y.add_argument("--svg")
    y.set_defaults(func=cmd_tauy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = thread_cap()
    try:
        args.func(args)
    except (ValueError, ResourceError) as exc:
        print(json.dumps({"error": "validation", "command": args.command, "message": str(exc)}), file=_sys.stderr)
        return 1
    except NumericError as exc:
        print(json.dumps({"error": "numeric", "command": args.command, "message": str(exc)}), file=_sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
