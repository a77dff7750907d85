"""E(m) tables and fitted decay for every built-in system, written as CSV."""
import argparse
import csv
from pathlib import Path

from startile.substitution import BUILTIN, get_system, pf_stats, product_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=16)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(BUILTIN):
        sys = get_system(name)
        st = product_report(sys, args.levels)
        pf = pf_stats(sys)
        path = out / ("convergence_%s.csv" % name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "E", "E_minus_1", "product"])
            for row in zip(st.levels, st.E_values, st.E_excess, st.partial_products):
                w.writerow([row[0]] + ["%.12g" % float(v) for v in row[1:]])
        eps = "n/a" if st.epsilon is None else "%.6f" % st.epsilon
        print("%-8s lambda %.6f  |lambda2|/lambda %.6f  fitted eps %s  prod %.12g  -> %s"
              % (name, pf.lam, st.eigen_ratio, eps, float(st.partial_products[-1]), path))


if __name__ == "__main__":
    main()
