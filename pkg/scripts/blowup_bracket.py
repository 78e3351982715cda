"""Observed blow-up time of an ellipsoid against the two-sided comparison bounds."""

import argparse

from lpflow import FlowState, StepController, blowup_horizon, build_grid, ellipsoid, step_unnormalized


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--res", type=int, default=24)
    ap.add_argument("--p", type=float, default=0.0)
    ap.add_argument("--axes", type=float, nargs=3, default=[1.2, 1.0, 0.8])
    ap.add_argument("--stop", type=float, default=50.0, help="stop once max h exceeds this")
    args = ap.parse_args()
    g = build_grid(2, args.res)
    h0 = ellipsoid(g, args.axes)
    lo, hi = blowup_horizon(h0, 1.0, args.p)
    state, ctl = FlowState(h0), StepController()
    while state.h.values.max() < args.stop:
        state = step_unnormalized(state, 1.0, args.p, ctl)
    rest_lo, rest_hi = blowup_horizon(state.h, 1.0, args.p)
    print(f"bounds at t=0: [{lo:.6f}, {hi:.6f}]")
    print(f"max h = {state.h.values.max():.1f} at t = {state.t:.6f} after {state.step_count} steps")
    print(f"blow-up time in [{state.t + rest_lo:.6f}, {state.t + rest_hi:.6f}]")


if __name__ == "__main__":
    main()
