"""Per-step records of the quantities bounded along the flow."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .convex_body import embed, lp_barycenter, volume
from .flow_engine import FlowState, phi_field
from .sphere_grid import integrate

__all__ = ["DiagnosticsRow", "Recorder", "record", "volume_variation_defect",
           "write_series", "read_series"]


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    min_h: float
    max_h: float
    min_K: float
    max_K: float
    min_kappa: float
    max_kappa: float
    volume: float
    barycenter_norm: float
    theta_lower: float
    theta_polar: float
    speed_moment: float  # integral of phi h^{2-p} S_n^2, i.e. dV/dt
    dt: float
    accepted: bool = True


COLUMNS = [f.name for f in fields(DiagnosticsRow)]


def record(state: FlowState, phi, p: float, c1: float) -> DiagnosticsRow:
    """Diagnostics of the current state.

    ``c1`` is an upper bound for h over the run so far.  ``theta_lower`` is
    min psi S_n / (2 c1 - h) with psi = phi h^{2-p}.  ``theta_polar`` is the
    polar-body quantity max psi* / S_n* / (h* - c1'/2) with c1' = 1/c1; it
    is evaluated at the paired normals u* = x(u)/|x(u)|, where
    psi*/S_n* = phi h^{1-p} S_n / |x| and h* = 1/|x|, so no polar body has
    to be built.
    """
    h = state.h
    g = h.grid
    curv = state.cache
    hv = h.values
    ph = phi_field(phi, g)
    sp = ph * hv ** (2.0 - p) * curv.sn
    kappa = curv.principal_curvatures
    radial = np.linalg.norm(embed(h), axis=1)
    theta_polar = ph * hv ** (1.0 - p) * curv.sn / (1.0 - radial / (2.0 * c1))
    return DiagnosticsRow(
        t=float(state.t),
        min_h=float(hv.min()),
        max_h=float(hv.max()),
        min_K=float(curv.gauss.min()),
        max_K=float(curv.gauss.max()),
        min_kappa=float(kappa.min()),
        max_kappa=float(kappa.max()),
        volume=volume(h, curv),
        barycenter_norm=float(np.linalg.norm(lp_barycenter(h, ph, p))),
        theta_lower=float((sp / (2.0 * c1 - hv)).min()),
        theta_polar=float(theta_polar.max()),
        speed_moment=integrate(sp * curv.sn, g),
        dt=float(state.dt_last),
    )


class Recorder:
    """Append-only log for one run; keeps c1 as the running max of h."""

    def __init__(self, phi, p: float):
        self.phi = phi
        self.p = p
        self.c1 = 0.0
        self.rows: list[DiagnosticsRow] = []

    def __call__(self, state: FlowState) -> DiagnosticsRow:
        self.c1 = max(self.c1, float(state.h.values.max()))
        row = record(state, self.phi, self.p, self.c1)
        self.rows.append(row)
        return row

    def __len__(self):
        return len(self.rows)


def volume_variation_defect(trajectory) -> float:
    """Largest relative gap between dV/dt and the speed moment.

    dV/dt at interior rows is the three-point derivative on the (possibly
    non-uniform) time grid, second order in the step.
    """
    rows = [r for r in trajectory if r.accepted]
    if len(rows) < 3:
        raise ValueError(f"need at least 3 accepted steps, got {len(rows)}")
    t = np.array([r.t for r in rows])
    V = np.array([r.volume for r in rows])
    I = np.array([r.speed_moment for r in rows])
    a = t[1:-1] - t[:-2]
    b = t[2:] - t[1:-1]
    dV = (a**2 * V[2:] - b**2 * V[:-2] + (b**2 - a**2) * V[1:-1]) / (a * b * (a + b))
    return float(np.max(np.abs(dV - I[1:-1]) / np.abs(I[1:-1])))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    return f"{float(x):.17g}"


def write_series(rows, path) -> None:
    """CSV with a fixed header, doubles at round-trip precision."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in astuple(r)])


def read_series(path) -> list[DiagnosticsRow]:
    with open(Path(path), newline="") as fh:
        rd = csv.DictReader(fh)
        out = []
        for rec in rd:
            vals = {k: float(rec[k]) for k in COLUMNS if k != "accepted"}
            out.append(DiagnosticsRow(**vals, accepted=rec["accepted"] == "1"))
        return out
