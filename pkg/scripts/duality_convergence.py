"""Duality residual and polar-body error of an ellipsoid under grid refinement."""

import argparse

import numpy as np

from lpflow import build_grid, duality_residual, ellipsoid, polar


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axes", type=float, nargs=3, default=[1.5, 1.0, 0.75])
    ap.add_argument("--res", type=int, nargs="+", default=[16, 24, 32, 48, 64])
    args = ap.parse_args()
    a = np.array(args.axes)
    print(f"{'L':>4} {'duality':>10} {'polar err':>10}")
    for L in args.res:
        g = build_grid(2, L)
        h = ellipsoid(g, a)
        exact = np.sqrt((g.nodes**2 / a**2).sum(1))
        err = np.abs(polar(h).values - exact).max()
        print(f"{L:4d} {duality_residual(h):10.2e} {err:10.2e}")


if __name__ == "__main__":
    main()
