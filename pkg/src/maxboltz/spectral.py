"""Radial characteristic-function oracle for isotropic data and cutoff kernels.

For an isotropic law the characteristic function depends on r = |xi| only,
and the Fourier form of the equation becomes

    d phi/dt (r) = int_0^1 b(x) phi(r sqrt(1 - x^2)) phi(r x) dx - phi(r).

Both arguments are at most r, so the grid never needs extrapolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .kernel import Kernel, KernelError, quadrature


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialCharFn:
    grid: np.ndarray
    values: np.ndarray
    t: float = 0.0

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    def spline(self) -> CubicSpline:
        # phi is even in r, so phi'(0) = 0
        return CubicSpline(self.grid, self.values, bc_type=((1, 0.0), "not-a-knot"))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if (r > self.r_max * (1 + 1e-12)).any() or (r < 0).any():
            raise ValueError("radius outside the grid")
        return self.spline()(r)

    def second_moment(self) -> float:
        """m2 = -3 phi''(0) from a Richardson-corrected three-point stencil."""
        f0, f1, f2 = self.values[:3]
        h1, h2 = self.grid[1], self.grid[2]
        if not np.isclose(h2, 2 * h1):
            c1 = 2 * (f1 - f0) / h1**2
            return float(-3 * c1)
        c1 = 2 * (f1 - f0) / h1**2
        c2 = 2 * (f2 - f0) / h2**2
        return float(-3 * (4 * c1 - c2) / 3)


def init_radial(phi0, r_max: float = 8.0, K: int = 256) -> RadialCharFn:
    grid = np.linspace(0.0, r_max, K + 1)
    values = np.asarray(phi0(grid), dtype=float)
    if abs(values[0] - 1.0) > 1e-12:
        raise ValueError(f"phi0(0) must be 1, got {values[0]}")
    return RadialCharFn(grid, values)


class BobylevOperator:
    """Precomputed evaluation points for the radial gain term."""

    def __init__(self, kernel: Kernel, grid: np.ndarray, n_q: int = 128):
        if not kernel.is_cutoff:
            raise KernelError("the radial oracle needs an integrable kernel; singular kernels go through truncation")
        x, w = quadrature(kernel, n_q)
        if abs(w.sum() - 1.0) > 1e-10:
            raise KernelError(f"kernel not normalized: quadrature mass {w.sum():.12f}")
        self.grid = grid
        self.w = w
        self.r_plus = np.minimum(grid[:, None] * np.sqrt(1.0 - x * x)[None, :], grid[-1])
        self.r_minus = np.minimum(grid[:, None] * x[None, :], grid[-1])

    def __call__(self, values: np.ndarray) -> np.ndarray:
        sp = CubicSpline(self.grid, values, bc_type=((1, 0.0), "not-a-knot"))
        gain = (sp(self.r_plus) * sp(self.r_minus)) @ self.w
        out = gain - values
        out[0] = 0.0
        return out


def bobylev_rhs(phi: RadialCharFn, kernel: Kernel, n_q: int = 128) -> np.ndarray:
    return BobylevOperator(kernel, phi.grid, n_q)(phi.values)


def evolve(phi0: RadialCharFn, kernel: Kernel, t_end: float, dt: float = 0.02, out_times=None,
           n_q: int = 128, energy_tol: float = 0.01) -> list[RadialCharFn]:
    """Classic RK4 in time; snapshots at ``out_times`` (default: t_end only)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    times = np.sort(np.asarray([t_end] if out_times is None else out_times, dtype=float))
    op = BobylevOperator(kernel, phi0.grid, n_q)
    m2_0 = phi0.second_moment()
    y = phi0.values.copy()
    t = 0.0
    traj = []
    for target in times:
        n = int(np.ceil((target - t) / dt - 1e-12))
        h = (target - t) / n if n > 0 else 0.0
        for _ in range(n):
            k1 = op(y)
            k2 = op(y + 0.5 * h * k1)
            k3 = op(y + 0.5 * h * k2)
            k4 = op(y + h * k3)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = float(target)
        snap = RadialCharFn(phi0.grid, y.copy(), t)
        if abs(y[0] - 1.0) > 1e-12 or np.abs(y).max() > 1.0 + 1e-6:
            raise SpectralError(f"bound violated at t={t}: max|phi| = {np.abs(y).max():.8f}; reduce dt")
        m2 = snap.second_moment()
        if m2_0 > 1e-12 and abs(m2 - m2_0) > energy_tol * m2_0:
            raise SpectralError(f"energy drift at t={t}: m2 {m2_0:.6g} -> {m2:.6g}")
        traj.append(snap)
    return traj


def maxwellian(m2: float):
    return lambda r: np.exp(-m2 * np.asarray(r, dtype=float) ** 2 / 6.0)
