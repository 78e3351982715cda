"""Solve the even L_p-Minkowski problem for a range of p and tabulate the result.

    python3 scripts/minkowski_sweep.py --res 32 --phi "1+0.5*u3^2" --p -1 0 0.5 3
"""

import argparse
import time

from lpflow import build_grid, solve, verify_solution
from lpflow.cli_io import make_initial, parse_phi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--res", type=int, default=32)
    ap.add_argument("--phi", default="1+0.5*u3^2")
    ap.add_argument("--init", default="ellipsoid:1.2,1,0.9")
    ap.add_argument("--p", type=float, nargs="+", default=[-1.0, 0.0, 0.5, 3.0])
    ap.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args()

    g = build_grid(2, args.res)
    phi = parse_phi(args.phi, g)
    h0 = make_initial(args.init, g)
    print(f"{'p':>6} {'conv':>5} {'steps':>6} {'tau':>8} {'c':>10} {'lambda':>10} "
          f"{'residual':>9} {'defect':>9} {'duality':>9} {'secs':>6}")
    for p in args.p:
        t0 = time.perf_counter()
        r = solve(phi, p, h0, tol=args.tol)
        rep = verify_solution(r, phi, p)
        print(f"{p:6.2f} {str(r.converged):>5} {r.iterations:6d} {r.tau:8.3f} {r.c:10.6f} "
              f"{r.lam:10.6f} {r.residual_sup:9.2e} {rep['defect']:9.2e} "
              f"{rep['duality_residual']:9.2e} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
