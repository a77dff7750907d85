"""Net extraction and the square-grid tiling T_y for a built-in patch and the integer lattice."""
import argparse
import json
import math
from pathlib import Path

import numpy as np

from startile.nets import SeparatedNet, brute_force_owner, build_tau_Y, extract_net, separation, shape_classes
from startile.substitution import dilation, get_system, inflate_patch
from startile.svg import render_svg


def report(label, net, tau):
    owner_ok = np.array_equal(tau.owner, brute_force_owner(net, tau))
    sizes = [len(t) for t in tau.tiles]
    print("%-10s points %5d  r_sep %.4f  R_cov %.4f  side %.5f  squares %6d  tile sizes %d..%d  "
          "shapes %d  brute-force agrees %s" % (label, len(net.points), net.r_sep, net.R_cov, tau.side,
                                                len(tau.squares), min(sizes), max(sizes), shape_classes(tau),
                                                owner_ok))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--system", default="penrose")
    ap.add_argument("--level", type=int, default=6)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    g = np.arange(10) + 0.5
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    lattice = SeparatedNet(pts, separation(pts), math.sqrt(0.5))
    box = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
    report("lattice", lattice, build_tau_Y(lattice, box))

    sys = get_system(args.system)
    patch = inflate_patch(sys, 0, args.level)
    net = extract_net(patch, sys)
    region = dilation(sys.xi ** args.level).apply(sys.prototiles[0].shape.vertices)
    tau = build_tau_Y(net, region)
    report(sys.name, net, tau)
    corners = tau.square_corners(np.arange(len(tau.squares)))
    (out / ("tau_y_%s.svg" % sys.name)).write_text(render_svg(list(corners), tau.owner % 8, points=net.points,
                                                              stroke=0.0))
    (out / ("net_%s.json" % sys.name)).write_text(json.dumps(net.to_dict()))


if __name__ == "__main__":
    main()
