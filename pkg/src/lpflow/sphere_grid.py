"""
Discretisation of the unit sphere S^n for n = 1, 2.

n = 1 : uniform angles on the circle, trigonometric (FFT) differentiation.
n = 2 : Gauss-Legendre colatitudes x uniform longitudes.  No node sits on a
        pole, so the (theta, phi) chart is regular at every node.

Fields are flat float arrays of length ``grid.size``.  For n = 2 the flat
index is latitude-major: ``k = i * (2L) + j`` for colatitude ``i`` and
longitude ``j``.

Latitude derivatives work mode-by-mode in longitude.  The m-th Fourier
coefficient of a polynomial restricted to S^2 is ``P(mu)`` for even m and
``sin(theta) * P(mu)`` for odd m, with ``mu = cos(theta)``, so after removing
the ``sin(theta)`` factor each column is differentiated exactly by the
Lagrange differentiation matrix on the Gauss-Legendre nodes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import roots_legendre, sph_harm_y

__all__ = ["Grid", "build_grid", "integrate", "covariant_hessian"]


def _barycentric_weights(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # Gauss-Legendre closed form; x must be sorted, signs alternate in node order.
    b = np.sqrt((1.0 - x**2) * lam)
    b[1::2] *= -1.0
    return b


def _diff_matrix(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (b[None, :] / b[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _interp_matrix(x: np.ndarray, b: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """Barycentric Lagrange interpolation matrix from nodes ``x`` to ``xt``."""
    diff = xt[:, None] - x[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    M = b[None, :] / diff
    M /= M.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        M[rows] = hit[rows].astype(float)
    return M


class Grid:
    """Quadrature nodes, weights and spectral differentiation on S^n.

    Parameters
    ----------
    n : int
        Sphere dimension, 1 or 2.
    resolution : int
        Number of angles (n = 1) or number of colatitudes L (n = 2, with 2L
        longitudes).  Must be even and at least 8.

    Notes
    -----
    Quadrature is exact for spherical harmonics of degree ``quad_degree``
    (``resolution - 1`` for the circle, ``2L - 1`` for S^2).  Differentiation
    and interpolation are exact on restrictions of polynomials of degree
    ``degree`` (``resolution/2 - 1`` resp. ``L - 1``).
    """

    def __init__(self, n: int, resolution: int):
        if n not in (1, 2):
            raise ValueError(f"unsupported sphere dimension n={n}; only 1 and 2")
        if int(resolution) != resolution or resolution < 8:
            raise ValueError(f"resolution must be an integer >= 8, got {resolution}")
        if resolution % 2:
            raise ValueError(
                f"resolution must be even for antipodal closure, got {resolution}"
            )
        self.dim = n
        self.resolution = L = int(resolution)
        if n == 1:
            self._build_circle(L)
        else:
            self._build_sphere(L)
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)
        self.antipode.setflags(write=False)

    # construction -----------------------------------------------------------

    def _build_circle(self, N: int) -> None:
        self.shape = (N,)
        self.size = N
        self.angle = 2.0 * np.pi * np.arange(N) / N
        self.nodes = np.stack([np.cos(self.angle), np.sin(self.angle)], axis=1)
        self.weights = np.full(N, 2.0 * np.pi / N)
        self.antipode = (np.arange(N) + N // 2) % N
        self.wavenumber = np.arange(N // 2 + 1, dtype=float)
        self.wavenumber[-1] = 0.0  # Nyquist column dropped throughout
        self.spacing = 2.0 * np.pi / N
        self.degree = N // 2 - 1
        self.quad_degree = N - 1
        self.laplacian_bound = float(self.degree**2)
        self.measure = 2.0 * np.pi

    def _build_sphere(self, L: int) -> None:
        mu, lam = roots_legendre(L)
        order = np.argsort(-mu)  # theta ascending, north to south
        mu, lam = mu[order], lam[order]
        self.mu = mu
        self.theta = np.arccos(mu)
        self.sin_theta = np.sqrt(1.0 - mu**2)
        self.phi = 2.0 * np.pi * np.arange(2 * L) / (2 * L)
        self.shape = (L, 2 * L)
        self.size = 2 * L * L
        self.spacing = np.pi / L
        self.degree = L - 1
        self.quad_degree = 2 * L - 1
        self.laplacian_bound = float(self.degree * (self.degree + 1))
        self.measure = 4.0 * np.pi

        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        s, c = np.sin(T), np.cos(T)
        self.nodes = np.stack(
            [s * np.cos(P), s * np.sin(P), c], axis=-1
        ).reshape(-1, 3)
        self.weights = np.outer(lam, np.full(2 * L, np.pi / L)).ravel()

        # theta -> pi - theta reverses the latitude order; phi -> phi + pi shifts by L
        ii, jj = np.meshgrid(np.arange(L), np.arange(2 * L), indexing="ij")
        self.antipode = ((L - 1 - ii) * 2 * L + (jj + L) % (2 * L)).ravel()

        e_theta = np.stack([c * np.cos(P), c * np.sin(P), -s], axis=-1).reshape(-1, 3)
        e_phi = np.stack(
            [-np.sin(P), np.cos(P), np.zeros_like(P)], axis=-1
        ).reshape(-1, 3)
        self._frame = np.stack([e_theta, e_phi], axis=1)

        self._bary = _barycentric_weights(mu, lam)
        self._D = _diff_matrix(mu, self._bary)
        self.m = np.arange(L + 1)
        self._odd = (self.m % 2 == 1)
        self._lam = lam

        # orthonormal associated Legendre columns for the harmonic projection
        A = np.zeros((L + 1, L, L))
        for m in range(L):
            ell = np.arange(m, L)
            A[m][:, m:] = np.sqrt(2.0 * np.pi) * sph_harm_y(
                ell[None, :], m, self.theta[:, None], 0.0
            ).real
        self._legendre = A
        # per-mode projector onto span of the orthonormal columns
        self._projector = (A @ A.transpose(0, 2, 1)) * lam[None, None, :]

    # basic geometry ---------------------------------------------------------

    @property
    def frame(self) -> np.ndarray:
        """Orthonormal tangent frame per node, shape (N, n, n+1)."""
        if self.dim == 1:
            return np.stack([-self.nodes[:, 1], self.nodes[:, 0]], axis=1)[:, None, :]
        return self._frame

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.size:
            raise ValueError(
                f"field has {f.shape[0]} values, grid has {self.size} nodes"
            )
        return f

    # spectral machinery (n = 2) ----------------------------------------------

    def _modes(self, f: np.ndarray) -> np.ndarray:
        F = np.fft.rfft(f.reshape(self.shape), axis=1)
        F[:, -1] = 0.0  # Nyquist
        return F

    def _unmodes(self, F: np.ndarray) -> np.ndarray:
        return np.fft.irfft(F, n=self.shape[1], axis=1).ravel()

    def _theta_derivs(self, F: np.ndarray):
        """First and second theta derivatives of every Fourier column."""
        s = self.sin_theta[:, None]
        mu = self.mu[:, None]
        odd = self._odd[None, :]
        G = np.where(odd, F / s, F)
        G1 = self._D @ G
        G2 = self._D @ G1
        d1 = np.where(odd, mu * G - s**2 * G1, -s * G1)
        d2 = np.where(odd, -s * (G + 3.0 * mu * G1 - s**2 * G2), -mu * G1 + s**2 * G2)
        return d1, d2

    def derivatives(self, f):
        """Chart derivatives of ``f``.

        Returns ``(f_theta, f_phi, f_theta_theta, f_theta_phi, f_phi_phi)`` for
        n = 2 and ``(f', f'')`` for n = 1.
        """
        f = self.check(f)
        if self.dim == 1:
            F = np.fft.rfft(f)
            F[-1] = 0.0
            k = self.wavenumber
            d1 = np.fft.irfft(1j * k * F, n=self.size)
            d2 = np.fft.irfft(-(k**2) * F, n=self.size)
            return d1, d2
        F = self._modes(f)
        im = 1j * self.m[None, :]
        t1, t2 = self._theta_derivs(F)
        tp, _ = self._theta_derivs(im * F)
        return (
            self._unmodes(t1),
            self._unmodes(im * F),
            self._unmodes(t2),
            self._unmodes(tp),
            self._unmodes(im * im * F),
        )

    def gradient(self, f) -> np.ndarray:
        """Tangential gradient lifted to R^{n+1}, shape (N, n+1)."""
        if self.dim == 1:
            d1, _ = self.derivatives(f)
            return d1[:, None] * self.frame[:, 0, :]
        ft, fp, *_ = self.derivatives(f)
        s = np.repeat(self.sin_theta, self.shape[1])
        return ft[:, None] * self._frame[:, 0] + (fp / s)[:, None] * self._frame[:, 1]

    def hessian_frame(self, f) -> np.ndarray:
        """Covariant Hessian in the orthonormal frame, shape (N, n, n)."""
        if self.dim == 1:
            _, d2 = self.derivatives(f)
            return d2[:, None, None]
        ft, fp, ftt, ftp, fpp = self.derivatives(f)
        s = np.repeat(self.sin_theta, self.shape[1])
        c = np.repeat(self.mu, self.shape[1])
        H = np.empty((self.size, 2, 2))
        H[:, 0, 0] = ftt
        H[:, 0, 1] = H[:, 1, 0] = (ftp - c / s * fp) / s
        H[:, 1, 1] = (fpp + s * c * ft) / s**2
        return H

    def chart_metric_scale(self) -> np.ndarray:
        """sqrt(g_ii) per node and chart direction, shape (N, n)."""
        if self.dim == 1:
            return np.ones((self.size, 1))
        s = np.repeat(self.sin_theta, self.shape[1])
        return np.stack([np.ones_like(s), s], axis=1)

    def filter(self, f) -> np.ndarray:
        """Project onto spherical harmonics of degree <= ``degree``.

        Identity on restrictions of polynomials of that degree.  Removes the
        longitudinal modes that the pole-clustered chart would otherwise make
        very stiff.
        """
        f = self.check(f)
        if self.dim == 1:
            F = np.fft.rfft(f)
            F[-1] = 0.0
            return np.fft.irfft(F, n=self.size)
        F = self._modes(f)
        ri = np.stack([F.real.T, F.imag.T], axis=-1)  # (m, j, 2)
        out = self._projector @ ri
        return self._unmodes((out[..., 0] + 1j * out[..., 1]).T)

    def interpolate(self, f, points) -> np.ndarray:
        """Evaluate the spectral interpolant of ``f`` at unit vectors ``points``.

        ``f`` may carry trailing component axes, shape (N, ...).
        """
        f = self.check(f)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tail = f.shape[1:]
        flat = f.reshape(self.size, -1)
        if self.dim == 1:
            ang = np.arctan2(pts[:, 1], pts[:, 0])
            F = np.fft.rfft(flat, axis=0) / self.size
            F[-1] = 0.0
            k = np.arange(F.shape[0])
            E = np.exp(1j * np.outer(ang, k))
            E[:, 1:] *= 2.0
            out = (E @ F).real
            return out.reshape((len(pts),) + tail)
        L = self.shape[0]
        nc = flat.shape[1]
        cube = flat.T.reshape(nc, L, 2 * L)
        F = np.fft.rfft(cube, axis=2) / (2 * L)
        F[:, :, -1] = 0.0
        F[:, :, self._odd] /= self.sin_theta[None, :, None]
        # (L, nc*(L+1)) real/imag blocks so the contraction runs through BLAS
        G = np.moveaxis(F, 1, 0).reshape(L, -1)
        G = np.concatenate([G.real, G.imag], axis=1)
        mu_t = np.clip(pts[:, 2], -1.0, 1.0)
        s_t = np.sqrt(np.maximum(1.0 - mu_t**2, 0.0))
        phi_t = np.arctan2(pts[:, 1], pts[:, 0])
        B = _interp_matrix(self.mu, self._bary, mu_t)
        Gt = B @ G
        half = Gt.shape[1] // 2
        re = Gt[:, :half].reshape(-1, nc, L + 1)
        im = Gt[:, half:].reshape(-1, nc, L + 1)
        arg = np.outer(phi_t, self.m)
        cos = np.cos(arg)
        sin = np.sin(arg)
        cos[:, 1:] *= 2.0
        sin[:, 1:] *= 2.0
        odd = np.where(self._odd, s_t[:, None], 1.0)
        out = np.einsum("tcm,tm->tc", re, cos * odd) - np.einsum("tcm,tm->tc", im, sin * odd)
        return out.reshape((len(pts),) + tail)

    def __repr__(self) -> str:
        return f"Grid(n={self.dim}, resolution={self.resolution}, size={self.size})"


def build_grid(n: int, resolution: int) -> Grid:
    return Grid(n, resolution)


def integrate(f, g: Grid) -> float:
    """Quadrature of ``f`` against the spherical measure.

    Uses ``math.fsum`` over the node-ordered products, which is exactly
    rounded and therefore independent of summation order.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (g.size,):
        raise ValueError(f"field has shape {f.shape}, grid expects ({g.size},)")
    return math.fsum((f * g.weights).tolist())


def covariant_hessian(f, g: Grid) -> np.ndarray:
    """Covariant Hessian of ``f`` with respect to the round metric.

    Components are in the coordinate basis: ``f''`` for the circle and
    ``(theta, phi)`` components for S^2, shape (N, n, n).
    """
    f = g.check(f)
    if not np.all(np.isfinite(f)):
        raise ValueError("covariant_hessian: non-finite field values")
    H = g.hessian_frame(f)
    scale = g.chart_metric_scale()
    return H * scale[:, :, None] * scale[:, None, :]
