"""
Time stepping of the anisotropic expanding Gauss curvature flow

    dh/dt = phi h^{2-p} S_n,

its volume-normalised form, and the induced flow of the polar bodies.

Steps use the Bogacki-Shampine 2(3) embedded pair.  A step is accepted only
when the local error estimate is within tolerance and every stage stays
convex with the origin inside; otherwise dt is halved and the step retried.
Right-hand sides are passed through ``Grid.filter`` before use, which keeps
the explicit stability limit at O(spacing^2) instead of the much smaller
limit set by the longitude spacing next to the poles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex_body import (
    ConvexityError,
    CurvatureData,
    SupportField,
    ball_volume,
    curvature,
    volume,
)
from .sphere_grid import Grid, integrate

log = logging.getLogger(__name__)

__all__ = [
    "FlowError",
    "FlowState",
    "StepController",
    "phi_field",
    "phi_at",
    "speed",
    "normalized_rate",
    "polar_speed",
    "step_unnormalized",
    "step_normalized",
    "polar_step",
    "rescale_solution",
    "blowup_horizon",
    "run_unnormalized",
    "run_polar",
]


class FlowError(RuntimeError):
    def __init__(self, message: str, state: "FlowState | None" = None):
        self.state = state
        super().__init__(message)


# anisotropy -----------------------------------------------------------------

def phi_field(phi, g: Grid) -> np.ndarray:
    """Node values of phi given as a constant, a node array or a callable of u."""
    if callable(phi):
        vals = np.asarray(phi(g.nodes), dtype=float)
    else:
        vals = np.asarray(phi, dtype=float)
    return np.broadcast_to(vals, (g.size,)).astype(float)


def phi_at(phi, g: Grid, directions: np.ndarray) -> np.ndarray:
    """phi at arbitrary unit vectors; node arrays are interpolated spectrally."""
    if callable(phi):
        return np.asarray(phi(directions), dtype=float)
    arr = np.asarray(phi, dtype=float)
    if arr.ndim == 0:
        return np.full(len(directions), float(arr))
    return g.interpolate(arr, directions)


# state ------------------------------------------------------------------------

@dataclass
class FlowState:
    h: SupportField
    t: float = 0.0
    step_count: int = 0
    cache: CurvatureData | None = None
    rate: np.ndarray | None = None  # dh/dt at h, unfiltered
    dt_last: float = float("nan")

    def __post_init__(self):
        if self.cache is None:
            self.cache = curvature(self.h)


@dataclass
class StepController:
    """Adaptive step-size control.

    ``dt`` is the step that will be attempted next; ``None`` means use the
    heuristic ``initial_cfl * spacing^2 / max(|speed| tr(r^{-1}))``.  Accepted
    steps are additionally capped at ``cfl / max(|speed| kappa_max) / Lambda``,
    where ``kappa_max`` is the largest principal curvature and ``Lambda`` the
    largest Laplacian eigenvalue kept by the grid filter.  The linearised
    operator is bounded by ``|speed| kappa_max`` times the Laplacian, so
    ``cfl`` is the step measured against its spectral radius; the explicit
    stability interval of the scheme on the negative axis is about 2.5.
    """

    dt: float | None = None
    safety: float = 0.9
    rtol: float = 1e-8
    atol: float = 1e-10
    max_rejections: int = 40
    cfl: float = 1.8
    initial_cfl: float = 0.1
    fixed: bool = False
    dt_max: float = math.inf
    rejected: int = 0

    def stability_scale(self, g: Grid, rate: np.ndarray, curv: CurvatureData) -> float:
        stiff = float(np.max(np.abs(rate) * curv.trace_inverse))
        return g.spacing**2 / max(stiff, 1e-300)

    def stability_cap(self, g: Grid, rate: np.ndarray, curv: CurvatureData) -> float:
        kmax = 1.0 / curv.principal_radii[:, 0]
        stiff = float(np.max(np.abs(rate) * kmax)) * g.laplacian_bound
        return self.cfl / max(stiff, 1e-300)


# right-hand sides ---------------------------------------------------------------

def _speed(h: SupportField, curv: CurvatureData, phi, p: float) -> np.ndarray:
    return phi_field(phi, h.grid) * h.values ** (2.0 - p) * curv.sn


def speed(state: FlowState, phi, p: float) -> np.ndarray:
    """Pointwise phi h^{2-p} S_n."""
    return _speed(state.h, state.cache, phi, p)


def _normalized(h: SupportField, curv: CurvatureData, phi, p: float) -> np.ndarray:
    n = h.n
    sp = _speed(h, curv, phi, p)
    mean = integrate(sp * curv.sn, h.grid) / ((n + 1) * ball_volume(n))
    return sp - mean * h.values


def normalized_rate(state: FlowState, phi, p: float) -> np.ndarray:
    """Right-hand side of the volume-normalised flow at ``state``."""
    return _normalized(state.h, state.cache, phi, p)


def _polar_speed(hs: SupportField, curv: CurvatureData, phi, p: float) -> np.ndarray:
    g = hs.grid
    n = hs.n
    x = hs.values[:, None] * g.nodes + g.gradient(hs.values)
    q = (x**2).sum(axis=1)
    normal = x / np.sqrt(q)[:, None]
    psi = phi_at(phi, g, normal) * q ** ((n + 1 + p) / 2.0) / hs.values ** (n + 1)
    return -psi / curv.sn


def polar_speed(state: FlowState, phi, p: float) -> np.ndarray:
    """dh*/dt for the polar body, -psi* / S_n*."""
    return _polar_speed(state.h, state.cache, phi, p)


# generic embedded RK step -----------------------------------------------------------

_Rhs = Callable[[SupportField, CurvatureData], np.ndarray]


def _rk23(state: FlowState, rhs: _Rhs, controller: StepController,
          t_end: float | None = None,
          project: Callable[[SupportField, CurvatureData], tuple] | None = None,
          stiffness: np.ndarray | None = None,
          ) -> FlowState:
    """``stiffness`` is the pointwise speed multiplying the curvature operator,
    defaulting to the right-hand side itself."""
    h0 = state.h
    g = h0.grid
    y0 = h0.values
    k1_raw = state.rate if state.rate is not None else rhs(h0, state.cache)
    if stiffness is None:
        stiffness = k1_raw
    if controller.dt is None:
        controller.dt = controller.initial_cfl * controller.stability_scale(
            g, stiffness, state.cache)
    cap = controller.stability_cap(g, stiffness, state.cache)
    k1 = g.filter(k1_raw)

    def evaluate(values):
        hs = h0.with_values(values)
        c = curvature(hs)
        return hs, c, rhs(hs, c)

    rejections = 0
    while True:
        dt = min(controller.dt, controller.dt_max)
        if not controller.fixed:
            dt = min(dt, cap)
        if t_end is not None:
            dt = min(dt, t_end - state.t)
        if dt <= 0.0:
            raise FlowError("non-positive step requested", state)
        try:
            _, _, r2 = evaluate(y0 + 0.5 * dt * k1)
            k2 = g.filter(r2)
            _, _, r3 = evaluate(y0 + 0.75 * dt * k2)
            k3 = g.filter(r3)
            y1 = y0 + dt * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
            h1, c1, r4 = evaluate(y1)
            k4 = g.filter(r4)
            est = dt * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 0.125 * k4)
            err = float(np.max(np.abs(est) / (controller.atol + controller.rtol * np.abs(y1))))
            ok = controller.fixed or err <= 1.0
            reason = f"error estimate {err:.3g}"
        except (ConvexityError, ValueError) as exc:
            ok, err, reason = False, math.inf, str(exc)
        if ok:
            break
        rejections += 1
        controller.rejected += 1
        log.debug("step rejected at t=%.6g dt=%.3g: %s", state.t, dt, reason)
        if rejections > controller.max_rejections:
            raise FlowError(
                f"step rejected {rejections} times at t={state.t:.6g} "
                f"(last dt={dt:.3g}): {reason}",
                state,
            )
        controller.dt = 0.5 * dt

    if project is not None:
        h1, c1 = project(h1, c1)
        r4 = rhs(h1, c1)
    if not controller.fixed:
        grow = 5.0 if err == 0.0 else min(5.0, max(0.2, controller.safety * err ** (-1.0 / 3.0)))
        controller.dt = dt * grow
    return FlowState(
        h=h1, t=state.t + dt, step_count=state.step_count + 1,
        cache=c1, rate=r4, dt_last=dt,
    )


# public steppers ---------------------------------------------------------------------

def step_unnormalized(state: FlowState, phi, p: float, controller: StepController,
                      t_end: float | None = None) -> FlowState:
    """One accepted step of dh/dt = phi h^{2-p} S_n."""
    phi_v = phi_field(phi, state.h.grid)
    return _rk23(state, lambda h, c: _speed(h, c, phi_v, p), controller, t_end)


def _scaled_curvature(c: CurvatureData, lam: float, n: int) -> CurvatureData:
    sn = c.sn * lam**n
    return CurvatureData(
        r_matrix=c.r_matrix * lam, r_frame=c.r_frame * lam, sn=sn,
        gauss=1.0 / sn, principal_radii=c.principal_radii * lam,
    )


def _unit_volume_projection(h: SupportField, c: CurvatureData):
    n = h.n
    lam = (ball_volume(n) / volume(h, c)) ** (1.0 / (n + 1))
    return h.scaled(lam), _scaled_curvature(c, lam, n)


def step_normalized(state: FlowState, phi, p: float, controller: StepController,
                    t_end: float | None = None) -> FlowState:
    """One accepted step of the volume-normalised flow, then exact rescaling
    back to the unit-ball volume.  ``state.t`` is the normalised time."""
    vb = ball_volume(state.h.n)
    v = volume(state.h, state.cache)
    if abs(v / vb - 1.0) > 1e-8:
        raise ValueError(
            f"normalised step needs unit-ball volume, got V/V(B)-1={v / vb - 1:.3g}"
        )
    phi_v = phi_field(phi, state.h.grid)
    return _rk23(
        state, lambda h, c: _normalized(h, c, phi_v, p), controller, t_end,
        project=_unit_volume_projection,
        stiffness=_speed(state.h, state.cache, phi_v, p),
    )


def polar_step(state: FlowState, phi, p: float, controller: StepController,
               t_end: float | None = None) -> FlowState:
    """One accepted step of the polar flow dh*/dt = -psi*/S_n*.

    ``phi`` is evaluated at the polar normal directions, which are off-grid;
    node arrays are interpolated.
    """
    try:
        return _rk23(state, lambda h, c: _polar_speed(h, c, phi, p), controller, t_end)
    except FlowError as exc:
        hmin = float(state.h.values.min())
        raise FlowError(f"polar flow failed with min h*={hmin:.3g}: {exc}", state) from exc


# scaling and horizons -------------------------------------------------------------------

def rescale_solution(h: SupportField, lam: float, t: float, p: float):
    """Initial data and time of the dilated solution.

    If h(., t) solves the flow, so does lam^{1/(n+1)} h(., lam^{(1+n-p)/(n+1)} s);
    returns ``(lam^{1/(n+1)} h, t / lam^{(1+n-p)/(n+1)})``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    n = h.n
    return h.scaled(lam ** (1.0 / (n + 1))), t / lam ** ((1.0 + n - p) / (n + 1))


def blowup_horizon(h: SupportField, phi, p: float) -> tuple[float, float]:
    """Two-sided bounds on the remaining existence time T - t for p < n + 1,
    from comparison with the balls through max h and min h."""
    n = h.n
    if p >= n + 1:
        raise ValueError(f"finite blow-up only for p < n+1 = {n + 1}, got p={p}")
    ph = phi_field(phi, h.grid)
    e = p - n - 1.0
    lower = float(h.values.max()) ** e / ((n + 1 - p) * float(ph.max()))
    upper = float(h.values.min()) ** e / ((n + 1 - p) * float(ph.min()))
    return lower, upper


# drivers ----------------------------------------------------------------------------

@dataclass
class RunInfo:
    t_requested: float
    t_end: float
    clamped: bool
    steps: int = 0
    rejected: int = 0
    notes: list[str] = field(default_factory=list)


def run_unnormalized(h0: SupportField, phi, p: float, t_end: float,
                     controller: StepController | None = None,
                     on_step: Callable[[FlowState], None] | None = None,
                     horizon_fraction: float = 0.9):
    """Integrate the unnormalised flow to ``t_end``.

    For p < n+1 the end time is clamped to ``horizon_fraction`` of the lower
    blow-up bound at t = 0.  Returns ``(final_state, RunInfo)``.
    """
    controller = controller or StepController()
    info = RunInfo(t_requested=t_end, t_end=t_end, clamped=False)
    if p < h0.n + 1:
        cap = horizon_fraction * blowup_horizon(h0, phi, p)[0]
        if t_end > cap:
            info.t_end, info.clamped = cap, True
            info.notes.append(
                f"horizon clamped from {t_end:.17g} to {cap:.17g} "
                f"({horizon_fraction} x lower blow-up bound)"
            )
    state = FlowState(h0)
    if on_step is not None:
        on_step(state)
    while state.t < info.t_end * (1 - 1e-14):
        state = step_unnormalized(state, phi, p, controller, t_end=info.t_end)
        if on_step is not None:
            on_step(state)
    info.steps = state.step_count
    info.rejected = controller.rejected
    return state, info


def run_polar(hs0: SupportField, phi, p: float, t_end: float,
              controller: StepController | None = None) -> FlowState:
    controller = controller or StepController()
    state = FlowState(hs0)
    while state.t < t_end * (1 - 1e-14):
        state = polar_step(state, phi, p, controller, t_end=t_end)
    return state
