"""Unnormalized runs from a ball against the exact radius r(t)."""

import argparse
import math
import time

import numpy as np

from lpflow import ball, build_grid, run_unnormalized


def exact_radius(p, n, r0, t):
    e = p - n - 1
    if e == 0:
        return r0 * math.exp(t)
    return (r0**e + t * e) ** (1 / e)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--res", type=int, default=32)
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 2.0, 3.0, 5.0])
    ap.add_argument("--t", type=float, default=1.0)
    args = ap.parse_args()
    g = build_grid(2, args.res)
    for p in args.p:
        t0 = time.perf_counter()
        errs = []
        state, info = run_unnormalized(
            ball(g), 1.0, p, args.t,
            on_step=lambda s: errs.append(
                np.abs(s.h.values / exact_radius(p, 2, 1.0, s.t) - 1).max()),
        )
        note = f" ({info.notes[0]})" if info.notes else ""
        print(f"p={p:5.2f} t={state.t:.4f} steps={state.step_count:5d} "
              f"max rel err={max(errs):.2e} {time.perf_counter() - t0:.1f}s{note}")


if __name__ == "__main__":
    main()
