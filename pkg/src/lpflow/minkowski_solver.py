"""
Solutions of the smooth, even L_p-Minkowski problem as limits of the
volume-normalised flow.

A limit h of the normalised flow satisfies phi h^{1-p} S_n = c.  Dilating
by lam with lam^{n+1-p} = 1/c (p != n+1) turns it into a body with
phi h^{1-p} S_n = 1; for p = n+1 the dilation is fixed instead by
phi S_n / h^n = V(K).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .convex_body import (
    SupportField,
    ball_volume,
    curvature,
    duality_residual,
    normalize_to_unit_volume,
    recenter,
    volume,
)
from .flow_engine import FlowState, StepController, phi_field, step_normalized
from .sphere_grid import integrate

log = logging.getLogger(__name__)

__all__ = ["SolveResult", "self_similar_residual", "solve", "verify_solution",
           "evenness_defect"]

EVEN_TOL = 1e-12


@dataclass
class SolveResult:
    h_limit: SupportField
    c: float
    lam: float
    h_solution: SupportField
    residual_sup: float
    converged: bool
    iterations: int
    tau: float = 0.0
    speed_sup: float = float("nan")
    reason: str = ""
    translation: np.ndarray | None = None
    history: list = field(default_factory=list)  # (tau, speed_sup, residual_sup)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "reason": self.reason,
            "iterations": self.iterations,
            "tau": self.tau,
            "speed_sup": self.speed_sup,
            "c": self.c,
            "lambda": self.lam,
            "residual_sup": self.residual_sup,
            "translation": None if self.translation is None else self.translation.tolist(),
        }


def evenness_defect(values, g) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.abs(v - v[g.antipode]).max())


def self_similar_residual(h: SupportField, phi, p: float, curv=None):
    """Mean c of R = phi h^{1-p} S_n and the relative sup deviation max|R - c| / c."""
    g = h.grid
    if curv is None:
        curv = curvature(h)
    R = phi_field(phi, g) * h.values ** (1.0 - p) * curv.sn
    c = integrate(R, g) / g.measure
    return c, float(np.abs(R - c).max() / c)


def _dilation(h: SupportField, phi, p: float) -> float:
    n = h.n
    g = h.grid
    ph = phi_field(phi, g)
    vb = ball_volume(n)
    if p == n + 1:
        denom = volume(h) * integrate(h.values ** (n + 1) / ph, g)
        return ((n + 1) * vb / denom) ** (1.0 / (n + 1))
    moment = integrate(h.values**p / ph, g)
    return (moment / ((n + 1) * vb)) ** (1.0 / (n + 1 - p))


def _prepare(h0: SupportField, ph: np.ndarray, p: float):
    n = h0.n
    g = h0.grid
    if evenness_defect(ph, g) < EVEN_TOL:
        return h0.symmetrized(), None
    if -n - 1 < p <= -n:
        v = recenter(h0, ph, p)
        return h0.translated(v), v
    raise ValueError(
        f"phi is not even (defect {evenness_defect(ph, g):.3g}); "
        f"non-even data are only admissible for -n-1 < p <= -n"
    )


def solve(phi, p: float, h0: SupportField, tol: float = 1e-6, max_tau: float = 50.0,
          controller: StepController | None = None, window: int = 10,
          stall_steps: int = 500, on_step=None) -> SolveResult:
    """Run the normalised flow to a self-similar limit and dilate it.

    Stops when ``max|dh/dtau| < tol * max h`` for ``window`` consecutive
    accepted steps.  Returns converged=False when ``max_tau`` is exceeded or
    when the residual has not improved for ``stall_steps`` steps.
    """
    n = h0.n
    g = h0.grid
    if not p > -n - 1:
        raise ValueError(f"p must satisfy p > -n-1 = {-n - 1}, got {p}")
    ph = phi_field(phi, g)
    if ph.min() <= 0.0:
        raise ValueError("phi must be positive")
    controller = controller or StepController()

    h_start, shift = _prepare(h0, ph, p)
    state = FlowState(normalize_to_unit_volume(h_start))
    if on_step is not None:
        on_step(state)
    recent = deque(maxlen=window)
    best = np.inf
    best_step = 0
    history = []
    converged = False
    reason = "max_tau exceeded"
    while state.t <= max_tau:
        state = step_normalized(state, ph, p, controller)
        if on_step is not None:
            on_step(state)
        # the band-limited part of the rate is what the integrator evolves
        speed_sup = float(np.abs(g.filter(state.rate)).max() / state.h.values.max())
        _, res = self_similar_residual(state.h, ph, p, state.cache)
        history.append((state.t, speed_sup, res))
        recent.append(speed_sup)
        if len(recent) == window and max(recent) < tol:
            converged, reason = True, "speed below tolerance"
            break
        if res < best * (1 - 1e-12):
            best, best_step = res, state.step_count
        elif state.step_count - best_step > stall_steps:
            reason = f"residual stalled for {stall_steps} steps"
            break
    log.info("solve p=%g: %s after %d steps (tau=%.4g)", p, reason,
             state.step_count, state.t)

    c, res = self_similar_residual(state.h, ph, p, state.cache)
    lam = _dilation(state.h, ph, p)
    return SolveResult(
        h_limit=state.h, c=c, lam=lam, h_solution=state.h.scaled(lam),
        residual_sup=res, converged=converged, iterations=state.step_count,
        tau=state.t, speed_sup=history[-1][1] if history else float("nan"),
        reason=reason, translation=shift, history=history,
    )


def verify_solution(result: SolveResult, phi, p: float, with_duality: bool = True) -> dict:
    """Pointwise check of the Minkowski equation on ``result.h_solution``.

    For p != n+1 the target is phi h^{1-p} S_n = 1; for p = n+1 it is
    phi S_n / h^n = V(K).
    """
    h = result.h_solution
    n = h.n
    g = h.grid
    ph = phi_field(phi, g)
    curv = curvature(h)
    if p == n + 1:
        lhs = ph * curv.sn / h.values**n / volume(h, curv)
        target = "phi S_n / h^n = V(K)"
    else:
        lhs = ph * h.values ** (1.0 - p) * curv.sn
        target = "phi h^(1-p) S_n = 1"
    report = {
        "target": target,
        "defect": float(np.abs(lhs - 1.0).max()),
        "residual_sup": result.residual_sup,
        "symmetry_defect": None,
        "duality_residual": None,
    }
    if evenness_defect(ph, g) < EVEN_TOL:
        report["symmetry_defect"] = evenness_defect(h.values, g)
    if with_duality:
        report["duality_residual"] = duality_residual(h)
    return report
