"""Holonomy constant and first eigenvalues on the unit circle over a range of angles."""

import argparse
import csv
import sys

import numpy as np

from bundle_spectra.bundle import flat_bundle_from_representation
from bundle_spectra.geometry import build_circle
from bundle_spectra.holonomy import check_holonomy_bounds
from bundle_spectra.netdisc import epsilon_net


def rotation(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=400)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--start", type=float, default=0.1)
    ap.add_argument("--stop", type=float, default=3.0)
    ap.add_argument("--step", type=float, default=0.1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    mesh = build_circle(1.0, args.N)
    disc = epsilon_net(mesh, args.eps)
    phis = np.round(np.arange(args.start, args.stop + 1e-9, args.step), 10)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out)
    w.writerow(["phi", "alpha", "lambda1_E", "lambda1_XA", "upper_XA", "upper_bound_XA", "lower"])
    for phi in phis:
        rep = check_holonomy_bounds(disc, flat_bundle_from_representation(mesh, [rotation(phi)]))
        r = rep.ratios
        w.writerow([phi, f"{rep.alpha:.10g}", f"{rep.lambda1_E:.10g}", f"{rep.lambda1_XA:.10g}",
                    f"{r['upper_XA']:.6g}", f"{r['upper_bound_XA']:.6g}", f"{r['lower']:.6g}"])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
