"""Lowest rough Laplacian eigenvalues of the sphere tangent bundle against k(k+1) - 1."""

import argparse

import numpy as np

from bundle_spectra.bundle import sphere_tangent_bundle
from bundle_spectra.geometry import build_sphere
from bundle_spectra.spectral import eigs, rough_laplacian


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subdivisions", type=int, default=4)
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args(argv)

    mesh = build_sphere(1.0, args.subdivisions)
    expect = np.concatenate([np.full(2 * (2 * k + 1), k * (k + 1) - 1.0) for k in range(1, args.levels + 1)])
    lam = eigs(rough_laplacian(sphere_tangent_bundle(mesh)), expect.size, dense_limit=0).eigenvalues
    for i, (a, b) in enumerate(zip(lam, expect), 1):
        print(f"{i:3d} {a:10.5f} {b:6.1f} {abs(a - b) / b:7.2%}")
    print(f"max relative deviation {np.max(np.abs(lam - expect) / expect):.3%}")


if __name__ == "__main__":
    main()
