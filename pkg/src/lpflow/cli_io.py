"""Run configuration, phi expressions, initial bodies and file output."""

from __future__ import annotations

import argparse
import ast
import csv
import dataclasses
import json
import logging
import math
import operator
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import sph_harm_y

from .convex_body import (
    ConvexityError,
    SupportField,
    ball,
    curvature,
    ellipsoid,
    embed,
    normalize_to_unit_volume,
)
from .diagnostics import Recorder, write_series
from .flow_engine import FlowError, FlowState, StepController, run_unnormalized, step_normalized
from .minkowski_solver import self_similar_residual, solve, verify_solution
from .sphere_grid import Grid, build_grid

log = logging.getLogger(__name__)

__all__ = ["PhiSpecError", "Phi", "parse_phi", "make_initial", "surface_mesh",
           "export_mesh", "RunConfig", "run", "main"]


# phi expressions -------------------------------------------------------------------

class PhiSpecError(ValueError):
    def __init__(self, message: str, spec: str, position: int | None = None):
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"{message}{where} in phi spec {spec!r}")


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _source_position(spec: str, col: int) -> int:
    # undo the '^' -> '**' rewrite when mapping columns back to the input
    pos, seen = 0, 0
    while seen < col and pos < len(spec):
        seen += 2 if spec[pos] == "^" else 1
        pos += 1
    return pos


def _compile(spec: str, variables: tuple[str, ...]):
    src = spec.replace("^", "**")
    try:
        tree = ast.parse(src.strip() or "(", mode="eval")
    except SyntaxError as exc:
        col = (exc.offset or 1) - 1
        raise PhiSpecError("parse error", spec, _source_position(spec, col)) from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            val = float(node.value)
            return lambda u: val
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise PhiSpecError(f"unknown name {node.id!r}", spec,
                                   _source_position(spec, node.col_offset))
            k = variables.index(node.id)
            return lambda u: u[:, k]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            f, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda u: f(a(u), b(u))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            f, a = _UNOPS[type(node.op)], build(node.operand)
            return lambda u: f(a(u))
        col = getattr(node, "col_offset", 0)
        raise PhiSpecError("unsupported syntax", spec, _source_position(spec, col))

    return build(tree)


@dataclass(frozen=True, eq=False)
class Phi:
    """A positive function on the sphere given by an expression in u1, u2, u3.

    Callable on arrays of unit vectors; ``values`` are the node values.
    """

    spec: str
    values: np.ndarray
    even_defect: float
    _fn: object

    @property
    def is_even(self) -> bool:
        return self.even_defect < 1e-12

    @property
    def min(self) -> float:
        return float(self.values.min())

    def __call__(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.broadcast_to(np.asarray(self._fn(u), dtype=float), (len(u),)).copy()


def parse_phi(spec: str, g: Grid, require_even: bool = False) -> Phi:
    """Compile ``spec`` (``+ - * / ^``, parentheses, decimals, u1..u{n+1})
    and evaluate it on the grid."""
    names = tuple(f"u{i + 1}" for i in range(g.dim + 1))
    fn = _compile(str(spec), names)
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(fn(g.nodes), dtype=float), (g.size,)).copy()
    if not np.all(np.isfinite(vals)):
        raise PhiSpecError("phi is not finite on the grid", spec)
    if vals.min() <= 0.0:
        raise PhiSpecError(f"phi must be positive, min on grid is {vals.min():.6g}", spec)
    defect = float(np.abs(vals - vals[g.antipode]).max())
    phi = Phi(str(spec), vals, defect, fn)
    if require_even and not phi.is_even:
        raise PhiSpecError(f"phi must be even, odd part up to {defect:.3g}", spec)
    return phi


# initial bodies ---------------------------------------------------------------------

def _floats(text: str, spec: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"bad numeric list in init spec {spec!r}") from None


def _even_harmonics(g: Grid, degree: int, rng: np.random.Generator) -> np.ndarray:
    u = g.nodes
    out = np.zeros(g.size)
    if g.dim == 1:
        ang = np.arctan2(u[:, 1], u[:, 0])
        for k in range(2, degree + 1, 2):
            a, b = rng.standard_normal(2)
            out += a * np.cos(k * ang) + b * np.sin(k * ang)
        return out
    theta = np.arccos(np.clip(u[:, 2], -1, 1))
    az = np.arctan2(u[:, 1], u[:, 0])
    for ell in range(2, degree + 1, 2):
        for m in range(ell + 1):
            Y = sph_harm_y(ell, m, theta, az)
            out += rng.standard_normal() * Y.real
            if m:
                out += rng.standard_normal() * Y.imag
    return out


def make_initial(init_spec: str, g: Grid, seed: int = 0) -> SupportField:
    """Build an initial body from a named constructor.

    ``ball:r``, ``ellipsoid:a,b[,c]``, ``perturbed_ball:r,amplitude,degree[,seed]``
    and ``translate:<spec>,v1,...,v{n+1}``.
    """
    spec = init_spec.strip()
    kind, _, rest = spec.partition(":")
    if kind == "ball":
        (r,) = _floats(rest, spec) or [1.0]
        return ball(g, r)
    if kind == "ellipsoid":
        return ellipsoid(g, _floats(rest, spec))
    if kind == "translate":
        parts = rest.split(",")
        d = g.dim + 1
        if len(parts) <= d:
            raise ValueError(f"translate needs an inner spec and {d} offsets: {spec!r}")
        inner = ",".join(parts[:-d])
        v = _floats(",".join(parts[-d:]), spec)
        return make_initial(inner, g, seed).translated(v)
    if kind == "perturbed_ball":
        vals = _floats(rest, spec)
        if len(vals) not in (3, 4):
            raise ValueError(f"perturbed_ball needs r,amplitude,degree[,seed]: {spec!r}")
        r, amp, degree = vals[0], vals[1], int(vals[2])
        if degree < 2:
            raise ValueError("perturbed_ball degree must be >= 2")
        rng = np.random.default_rng(int(vals[3]) if len(vals) == 4 else seed)
        Y = _even_harmonics(g, degree, rng)
        Y /= np.abs(Y).max()
        while amp >= 1e-8:
            try:
                h = SupportField(g, r * (1.0 + amp * Y))
                curvature(h)
            except (ConvexityError, ValueError):
                amp *= 0.5
                continue
            log.info("perturbed_ball amplitude %.6g", amp)
            return h
        raise ValueError(f"could not build a convex perturbed ball from {spec!r}")
    raise ValueError(f"unknown init spec {spec!r}")


# mesh output ------------------------------------------------------------------------

def surface_mesh(h: SupportField):
    """Vertices x(u) on the grid nodes and outward triangles (0-based).

    Neighbouring latitude rings are joined by split quads; the two polar
    rings are closed by fans over their own vertices.
    """
    g = h.grid
    if g.dim != 2:
        raise ValueError("surface mesh needs n = 2")
    L, M = g.shape
    verts = embed(h)
    idx = np.arange(L * M).reshape(L, M)
    nxt = np.roll(idx, -1, axis=1)
    a, b, c, d = idx[:-1], idx[1:], nxt[:-1], nxt[1:]
    faces = [np.stack([a, b, c], -1).reshape(-1, 3), np.stack([b, d, c], -1).reshape(-1, 3)]
    j = np.arange(1, M - 1)
    faces.append(np.stack([np.zeros_like(j), j, j + 1], -1) + idx[0, 0])
    faces.append(np.stack([np.zeros_like(j), j + 1, j], -1) + idx[-1, 0])
    return verts, np.concatenate(faces)


def export_mesh(h: SupportField, path) -> Path:
    """Write the embedded surface as Wavefront OBJ."""
    verts, faces = surface_mesh(h)
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# support-function surface, {len(verts)} vertices\n")
        for x in verts:
            fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*x))
        for f in faces + 1:
            fh.write("f {} {} {}\n".format(*f))
    return path


def write_support(h: SupportField, path) -> None:
    n = h.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"u{i + 1}" for i in range(n + 1)] + ["h"])
        for u, v in zip(h.grid.nodes, h.values):
            w.writerow([f"{x:.17g}" for x in (*u, v)])


# configuration and runs -----------------------------------------------------------------

MODES = ("unnormalized", "normalized", "solve")


@dataclass
class RunConfig:
    n: int = 2
    resolution: int = 32
    p: float = 2.0
    phi_spec: str = "1"
    init_spec: str = "ball:1"
    mode: str = "solve"
    tol: float = 1e-6
    max_tau: float = 50.0
    dt: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    cfl: float = 1.8
    out: str = "out"
    seed: int = 0

    def validate(self) -> None:
        if self.n not in (1, 2):
            raise ValueError(f"n must be 1 or 2, got {self.n}")
        if not self.p > -self.n - 1:
            raise ValueError(
                f"p={self.p} outside the admissible range -n-1 < p < inf "
                f"(p > {-self.n - 1} for n={self.n})"
            )
        if self.resolution % 2 or self.resolution < 8:
            raise ValueError(f"resolution must be even and >= 8, got {self.resolution}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, val in data.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _coerce(val, types[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(val, typ: str):
    if val is None or (isinstance(val, str) and val.strip().lower() in ("none", "")):
        return None
    if typ == "int":
        return int(val)
    if typ.startswith("float"):
        return float(val)
    return str(val)


def load_config_file(path) -> dict:
    """Key-value text (``key = value`` per line, ``#`` comments) or a run.json."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        return data.get("config", data)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = val.strip()
    return out


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _execute(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    g = build_grid(cfg.n, cfg.resolution)
    needs_even = cfg.mode == "solve" and not (-cfg.n - 1 < cfg.p <= -cfg.n)
    phi = parse_phi(cfg.phi_spec, g, require_even=needs_even)
    h0 = make_initial(cfg.init_spec, g, cfg.seed)
    controller = StepController(dt=cfg.dt, rtol=cfg.rtol, atol=cfg.atol, cfl=cfg.cfl)
    rec = Recorder(phi, cfg.p)
    summary: dict = {"phi_even_defect": phi.even_defect, "notes": []}
    status = 0

    if cfg.mode == "unnormalized":
        state, info = run_unnormalized(h0, phi, cfg.p, cfg.max_tau, controller, on_step=rec)
        summary.update(t_end=info.t_end, clamped=info.clamped, steps=info.steps,
                       rejected=info.rejected)
        summary["notes"] += info.notes
        final = state.h
    elif cfg.mode == "normalized":
        state = FlowState(normalize_to_unit_volume(h0))
        rec(state)
        while state.t < cfg.max_tau * (1 - 1e-14):
            state = step_normalized(state, phi, cfg.p, controller, t_end=cfg.max_tau)
            rec(state)
        c, res = self_similar_residual(state.h, phi, cfg.p, state.cache)
        summary.update(tau=state.t, steps=state.step_count, c=c, residual_sup=res,
                       speed_sup=float(np.abs(state.rate).max() / state.h.values.max()))
        final = state.h
    else:
        result = solve(phi, cfg.p, h0, tol=cfg.tol, max_tau=cfg.max_tau,
                       controller=controller, on_step=rec)
        summary.update(result.summary())
        summary["verify"] = verify_solution(result, phi, cfg.p, with_duality=cfg.n == 2)
        final = result.h_solution
        if not result.converged:
            status = 2

    write_series(rec.rows, out / "series.csv")
    write_support(final, out / "support_final.csv")
    if cfg.n == 2:
        export_mesh(final, out / "final.obj")
    else:
        summary["notes"].append("final.obj skipped: mesh export needs n = 2")
    return status, summary


def run(config: RunConfig) -> int:
    """Execute one run; returns the process exit status (0, 1 or 2)."""
    out = Path(config.out)
    record = {"config": config.to_dict()}
    try:
        config.validate()
        out.mkdir(parents=True, exist_ok=True)
        status, summary = _execute(config, out)
        record.update(status=status, **summary)
    except (ValueError, FlowError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        record.update(status=1, error=str(exc))
        status = 1
    if out.is_dir():
        with open(out / "run.json", "w") as fh:
            json.dump(_json_safe(record), fh, indent=2)
    return status


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lpflow",
        description="Anisotropic Gauss curvature flow and even L_p-Minkowski solver.",
    )
    ap.add_argument("--config", help="key = value file or a previous run.json")
    ap.add_argument("--n", type=int)
    ap.add_argument("--res", dest="resolution", type=int)
    ap.add_argument("--p", type=float)
    ap.add_argument("--phi", dest="phi_spec")
    ap.add_argument("--init", dest="init_spec")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--max-tau", dest="max_tau", type=float)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--rtol", type=float)
    ap.add_argument("--atol", type=float)
    ap.add_argument("--cfl", type=float)
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = load_config_file(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items()
                 if k not in ("config", "verbose") and v is not None}
        data.update(flags)
        cfg = RunConfig.from_mapping(data)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)
