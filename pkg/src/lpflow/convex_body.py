"""Convex bodies represented by their support function on a sphere grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sphere_grid import Grid, integrate

__all__ = [
    "SupportField",
    "PolarField",
    "CurvatureData",
    "ConvexityError",
    "RecenterError",
    "ball_volume",
    "ball",
    "ellipsoid",
    "curvature",
    "volume",
    "normalize_to_unit_volume",
    "embed",
    "polar",
    "duality_residual",
    "lp_barycenter",
    "recenter",
]

CONVEXITY_RTOL = 1e-8


class ConvexityError(ValueError):
    """Radii-of-curvature matrix is not positive definite somewhere."""

    def __init__(self, node: int, eigenvalue: float, trace: float):
        self.node = node
        self.eigenvalue = eigenvalue
        self.trace = trace
        super().__init__(
            f"convexity lost at node {node}: smallest principal radius "
            f"{eigenvalue:.6g} (trace {trace:.6g})"
        )


class RecenterError(RuntimeError):
    def __init__(self, message: str, last: np.ndarray):
        self.last = last
        super().__init__(f"{message}; last iterate v={last.tolist()}")


def ball_volume(n: int) -> float:
    """Volume of the unit ball in R^{n+1}."""
    return math.pi ** ((n + 1) / 2) / math.gamma((n + 3) / 2)


@dataclass(frozen=True, eq=False)
class SupportField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.grid.check(self.values), dtype=float)
        if v.ndim != 1:
            raise ValueError("support values must be a scalar field")
        if not np.all(np.isfinite(v)):
            raise ValueError("support function has non-finite values")
        if v.min() <= 0.0:
            k = int(np.argmin(v))
            raise ValueError(
                f"origin is not interior: h={v[k]:.6g} <= 0 at node {k}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.grid.dim

    def with_values(self, values) -> "SupportField":
        return type(self)(self.grid, values)

    def scaled(self, lam: float) -> "SupportField":
        return self.with_values(lam * self.values)

    def translated(self, v) -> "SupportField":
        """Support function of K + v."""
        return self.with_values(self.values + self.grid.nodes @ np.asarray(v, float))

    def symmetrized(self) -> "SupportField":
        h = self.values
        return self.with_values(0.5 * (h + h[self.grid.antipode]))


class PolarField(SupportField):
    """Support function of the polar body (reciprocal length units).

    ``preimage`` holds, for every node u, the normal v of the primal body
    whose boundary point x(v) lies in direction u.
    """

    preimage: np.ndarray | None = None


@dataclass(eq=False)
class CurvatureData:
    r_matrix: np.ndarray  # coordinate basis, (N, n, n)
    r_frame: np.ndarray  # orthonormal frame, (N, n, n)
    sn: np.ndarray
    gauss: np.ndarray
    principal_radii: np.ndarray  # ascending, (N, n)

    @property
    def principal_curvatures(self) -> np.ndarray:
        return 1.0 / self.principal_radii[:, ::-1]

    @property
    def trace_inverse(self) -> np.ndarray:
        """tr(r^{-1} g), the sum of principal curvatures."""
        return (1.0 / self.principal_radii).sum(axis=1)


def ball(g: Grid, r: float = 1.0) -> SupportField:
    return SupportField(g, np.full(g.size, float(r)))


def ellipsoid(g: Grid, axes) -> SupportField:
    axes = np.asarray(axes, dtype=float)
    if axes.shape != (g.dim + 1,):
        raise ValueError(f"need {g.dim + 1} semi-axes for n={g.dim}, got {axes.tolist()}")
    return SupportField(g, np.sqrt(((axes * g.nodes) ** 2).sum(axis=1)))


def curvature(h: SupportField, check: bool = True) -> CurvatureData:
    """Radii of curvature, S_n and Gauss curvature from the support function.

    Raises ConvexityError if the smallest principal radius falls below
    ``CONVEXITY_RTOL`` times the trace of the radii matrix.
    """
    g = h.grid
    R = g.hessian_frame(h.values)
    idx = np.arange(g.dim)
    R[:, idx, idx] += h.values[:, None]
    if g.dim == 2:
        a, b, c = R[:, 0, 0], R[:, 0, 1], R[:, 1, 1]
        half = np.hypot(0.5 * (a - c), b)
        radii = np.stack([0.5 * (a + c) - half, 0.5 * (a + c) + half], axis=1)
        sn = a * c - b * b
    else:
        radii = R[:, :, 0].copy()
        sn = radii[:, 0].copy()
    trace = radii.sum(axis=1)
    if check:
        bad = radii[:, 0] - CONVEXITY_RTOL * np.abs(trace)
        if not np.all(np.isfinite(radii)) or bad.min() <= 0.0:
            k = int(np.nanargmin(np.where(np.isfinite(bad), bad, -np.inf)))
            raise ConvexityError(k, float(radii[k, 0]), float(trace[k]))
    scale = g.chart_metric_scale()
    return CurvatureData(
        r_matrix=R * scale[:, :, None] * scale[:, None, :],
        r_frame=R,
        sn=sn,
        gauss=1.0 / sn,
        principal_radii=radii,
    )


def volume(h: SupportField, curv: CurvatureData | None = None) -> float:
    if curv is None:
        curv = curvature(h)
    return integrate(h.values * curv.sn, h.grid) / (h.n + 1)


def normalize_to_unit_volume(h: SupportField) -> SupportField:
    """Dilate so the body has the volume of the unit ball."""
    lam = (ball_volume(h.n) / volume(h)) ** (1.0 / (h.n + 1))
    return h.scaled(lam)


def embed(h: SupportField) -> np.ndarray:
    """Boundary point with outer normal u: x(u) = h(u) u + grad h(u)."""
    g = h.grid
    return h.values[:, None] * g.nodes + g.gradient(h.values)


def _tangent_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis at unit vectors v, shape (M, n, n+1)."""
    if v.shape[1] == 2:
        return np.stack([-v[:, 1], v[:, 0]], axis=1)[:, None, :]
    ref = np.zeros_like(v)
    ref[np.arange(len(v)), np.argmin(np.abs(v), axis=1)] = 1.0
    e1 = np.cross(v, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(v, e1)
    return np.stack([e1, e2], axis=1)


def _radii_cartesian(h: SupportField, curv: CurvatureData) -> np.ndarray:
    """Radii tensor lifted to R^{n+1}; upper-triangle components, (N, m)."""
    E = h.grid.frame
    R = np.einsum("kab,kai,kbj->kij", curv.r_frame, E, E)
    iu = np.triu_indices(h.n + 1)
    return R[:, iu[0], iu[1]]


def _unpack_sym(flat: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d)
    R = np.empty((len(flat), d, d))
    R[:, iu[0], iu[1]] = flat
    R[:, iu[1], iu[0]] = flat
    return R


def _seed_directions(h: SupportField, targets: np.ndarray, chunk: int = 1024):
    # max_v (u.v)/h(v) over grid normals v
    g = h.grid
    scaled = g.nodes / h.values[:, None]
    idx = np.empty(len(targets), dtype=int)
    for a in range(0, len(targets), chunk):
        idx[a:a + chunk] = np.argmax(targets[a:a + chunk] @ scaled.T, axis=1)
    return g.nodes[idx].copy()


def _radial_preimage(h, curv, targets, tol=1e-13, max_iter=20):
    """Normals v with x(v) parallel to each target direction u.

    Seeded by the discrete maximiser of (u.v)/h(v), then Newton on the
    spectral interpolants of x and of the radii tensor.
    """
    g = h.grid
    n = g.dim
    fields = np.concatenate([embed(h), _radii_cartesian(h, curv)], axis=1)
    tu = _tangent_basis(targets)
    v = _seed_directions(h, targets)
    last = np.inf
    for _ in range(max_iter):
        vals = g.interpolate(fields, v)
        X = vals[:, : n + 1]
        R = _unpack_sym(vals[:, n + 1:], n + 1)
        tv = _tangent_basis(v)
        F = np.einsum("kai,ki->ka", tu, X)
        J = np.einsum("kai,kij,kbj->kab", tu, R, tv)
        step = -np.linalg.solve(J, F[..., None])[..., 0]
        v = v + np.einsum("kb,kbi->ki", step, tv)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        size = np.abs(step).max()
        if size < tol or (size < 1e-9 and size >= last):
            break
        last = size
    X = g.interpolate(fields[:, : n + 1], v)
    return v, X


def polar(h: SupportField, curv: CurvatureData | None = None) -> PolarField:
    """Support function of the polar body, h*(u) = 1 / radial function of K."""
    if curv is None:
        curv = curvature(h)
    u = h.grid.nodes
    v, X = _radial_preimage(h, curv, u)
    radial = np.einsum("ki,ki->k", X, u)
    out = PolarField(h.grid, 1.0 / radial)
    object.__setattr__(out, "preimage", v)
    return out


def centro_affine(h: SupportField, curv: CurvatureData | None = None) -> np.ndarray:
    """S_n h^{n+2}, constant exactly on origin-centred ellipsoids."""
    if curv is None:
        curv = curvature(h)
    return curv.sn * h.values ** (h.n + 2)


def duality_residual(h: SupportField) -> float:
    """max_u |(S_n h^{n+2})(u) (S_n* h*^{n+2})(u*) - 1| with u* = x(u)/|x(u)|."""
    curv = curvature(h)
    hs = polar(h, curv)
    q = centro_affine(h, curv)
    qs = centro_affine(hs)
    x = embed(h)
    ustar = x / np.linalg.norm(x, axis=1, keepdims=True)
    return float(np.abs(q * h.grid.interpolate(qs, ustar) - 1.0).max())


def lp_barycenter(h: SupportField, phi, p: float) -> np.ndarray:
    """The vector integral of u / (phi h^{1-p}) over the sphere."""
    g = h.grid
    dens = 1.0 / (np.asarray(phi, float) * h.values ** (1.0 - p))
    return np.array([integrate(dens * g.nodes[:, i], g) for i in range(g.dim + 1)])


def recenter(h: SupportField, phi, p: float, tol: float = 1e-12,
             max_iter: int = 50) -> np.ndarray:
    """Translation v with lp_barycenter(K + v) ~ 0, by damped Newton.

    The Jacobian is a forward difference with step 1e-5 times the width
    bound ``2 max h``.
    """
    g = h.grid
    d = g.dim + 1
    fd = 1e-5 * 2.0 * float(h.values.max())

    def shifted(v):
        vals = h.values + g.nodes @ v
        return None if vals.min() <= 0.0 else h.with_values(vals)

    v = np.zeros(d)
    b = lp_barycenter(h, phi, p)
    for _ in range(max_iter):
        nb = np.linalg.norm(b)
        if nb < tol:
            return v
        J = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = fd
            hj = shifted(v + e)
            if hj is None:
                raise RecenterError("finite-difference probe left the body", v)
            J[:, j] = (lp_barycenter(hj, phi, p) - b) / fd
        try:
            dv = -np.linalg.solve(J, b)
        except np.linalg.LinAlgError:
            raise RecenterError("barycenter map has singular Jacobian", v) from None
        t = 1.0
        while t > 1e-6:
            trial = shifted(v + t * dv)
            if trial is not None:
                bt = lp_barycenter(trial, phi, p)
                if np.linalg.norm(bt) < nb:
                    v, b = v + t * dv, bt
                    break
            t *= 0.5
        else:
            if nb < 1e3 * tol:
                return v
            raise RecenterError("no admissible descent step", v)
    if np.linalg.norm(b) < tol:
        return v
    raise RecenterError(f"no convergence in {max_iter} iterations", v)
