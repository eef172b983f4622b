"""Singular kernels through truncation ladders, plus the Fourier-side bound.

Level n uses the normalized kernel (b ^ n) / B_n run for internal time
B_n t, which is the physical-time solution for the kernel b ^ n.  The
report records characteristic-function values on a probe grid for every
level and time, consecutive-level discrepancies, and the two Lipschitz
certificates (in xi and in t) that drive the compactness argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .collision import _draw, kac_trajectory, sample_wild, wild_feasible
from .datum import COUNTEREXAMPLE_COV, Datum, Gaussian
from .ensemble import Ensemble
from .kernel import KernelError, KernelSpec, first_level, kernel_moments, quadrature, truncate
from .rng import task_rng


class LadderError(ValueError):
    pass


# ---------------------------------------------------------------------------
# probe grid


def icosahedron() -> np.ndarray:
    g = (1.0 + math.sqrt(5.0)) / 2.0
    v = []
    for a in (-1.0, 1.0):
        for b in (-g, g):
            v += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    v = np.array(v)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def probe_directions() -> np.ndarray:
    """24 unit vectors: icosahedron vertices, coordinate axes, and six face diagonals."""
    axes = np.vstack([np.eye(3), -np.eye(3)])
    diag = np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, -1, 0], [1, 0, -1], [0, 1, -1]]) / math.sqrt(2.0)
    return np.vstack([icosahedron(), axes, diag])


def probe_grid(radii=(0.25, 0.5, 1.0, 2.0), directions=None) -> np.ndarray:
    d = probe_directions() if directions is None else np.asarray(directions, dtype=float)
    return np.array([r * u for r in radii for u in d])


# ---------------------------------------------------------------------------
# ladder


@dataclass
class ArkerydReport:
    levels: list
    B: list
    times: list
    probes: np.ndarray
    values: np.ndarray          # (L, T, P) complex
    se: np.ndarray              # (L, T, P)
    engine: str
    discrepancy: np.ndarray     # (L - 1, T) sup over probes
    discrepancy_se: np.ndarray  # (L - 1, T) SE of the difference at the argmax
    moments: list = field(default_factory=list)  # per (level, time) mean / raw second moments
    moment_se: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "levels": list(self.levels), "B": list(self.B), "times": list(self.times), "engine": self.engine,
            "probes": self.probes.tolist(),
            "re": self.values.real.tolist(), "im": self.values.imag.tolist(), "se": self.se.tolist(),
            "discrepancy": self.discrepancy.tolist(), "discrepancy_se": self.discrepancy_se.tolist(),
        }


def _charfn_points(points: np.ndarray, probes: np.ndarray) -> np.ndarray:
    out = np.empty(len(probes), dtype=complex)
    for lo in range(0, len(probes), 16):
        ph = points @ probes[lo:lo + 16].T
        out[lo:lo + 16] = np.cos(ph).mean(0) + 1j * np.sin(ph).mean(0)
    return out


def _moment_row(points):
    return np.concatenate([points.mean(0), (points.T @ points).ravel() / len(points)])


def arkeryd_run(kernel: KernelSpec, mu0: Datum, levels, t_grid, probes=None, M: int = 100_000, seed: int = 0,
                engine: str = "auto", replicas: int = 8) -> ArkerydReport:
    """Characteristic functions of the truncated solutions at physical times ``t_grid``.

    engine:
      * ``wild``  independent Wild samples, M per (level, time)
      * ``kac``   ``replicas`` independent particle systems of M / replicas
        particles, run once per level through all times; SE from the spread
        across replicas
      * ``spectral`` radial oracle (isotropic data only; SE reported as 0)
      * ``auto``  wild when the largest tree is affordable, kac otherwise
    All levels share their initial particles, so t = 0 rows coincide exactly.
    """
    levels = [int(n) for n in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise LadderError("levels must be strictly increasing")
    n0 = first_level(kernel)
    if levels[0] < n0:
        raise LadderError(f"level {levels[0]} is below n0 = {n0}")
    times = sorted(set(float(t) for t in t_grid) | {0.0})
    probes = probe_grid() if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    tk = [truncate(kernel, n) for n in levels]
    Bs = [k.B for k in tk]
    if engine == "auto":
        engine = "wild" if wild_feasible(max(Bs) * max(times)) else "kac"
    L, T, P = len(levels), len(times), len(probes)
    vals = np.empty((L, T, P), dtype=complex)
    ses = np.zeros((L, T, P))
    rep_vals = None
    mom = [[None] * T for _ in range(L)]
    mom_se = [[None] * T for _ in range(L)]

    if engine == "wild":
        for li, k in enumerate(tk):
            for ti, t in enumerate(times):
                pts = sample_wild(mu0, k, Bs[li] * t, task_rng(seed, 0, ti), M)
                ph = pts @ probes.T
                c, s = np.cos(ph), np.sin(ph)
                vals[li, ti] = c.mean(0) + 1j * s.mean(0)
                ses[li, ti] = np.hypot(c.std(0, ddof=1), s.std(0, ddof=1)) / math.sqrt(M)
                row = np.column_stack([pts, (pts[:, :, None] * pts[:, None, :]).reshape(M, 9)])
                mom[li][ti], mom_se[li][ti] = row.mean(0), row.std(0, ddof=1) / math.sqrt(M)
    elif engine == "kac":
        n_part = max(2, M // replicas)
        rep_vals = np.empty((replicas, L, T, P), dtype=complex)
        rep_mom = np.empty((replicas, L, T, 12))
        for r in range(replicas):
            V0 = _draw(mu0, task_rng(seed, 1, r), n_part)
            for li, k in enumerate(tk):
                traj = kac_trajectory(mu0, k, Bs[li] * np.array(times), n_part, task_rng(seed, 2, r, li), particles=V0)
                for ti, pts in enumerate(traj):
                    rep_vals[r, li, ti] = _charfn_points(pts, probes)
                    rep_mom[r, li, ti] = _moment_row(pts)
        vals = rep_vals.mean(0)
        sd = np.hypot(rep_vals.real.std(0, ddof=1), rep_vals.imag.std(0, ddof=1))
        ses = sd / math.sqrt(replicas)
        for li in range(L):
            for ti in range(T):
                mom[li][ti] = rep_mom[:, li, ti].mean(0)
                mom_se[li][ti] = rep_mom[:, li, ti].std(0, ddof=1) / math.sqrt(replicas)
    elif engine == "spectral":
        from .spectral import evolve, init_radial

        if not mu0.isotropic:
            raise LadderError("the spectral engine needs isotropic initial data")
        rad = np.linalg.norm(probes, axis=1)
        phi0 = init_radial(mu0.radial_char_fn, r_max=max(8.0, float(rad.max())))
        for li, k in enumerate(tk):
            pos = [t for t in times if t > 0]
            traj = evolve(phi0, k, Bs[li] * max(pos), out_times=[Bs[li] * t for t in pos]) if pos else []
            snaps = {0.0: phi0, **{t: s for t, s in zip(pos, traj)}}
            for ti, t in enumerate(times):
                vals[li, ti] = snaps[t](rad)
    else:
        raise LadderError(f"unknown engine {engine!r}")

    disc = np.zeros((max(L - 1, 0), T))
    disc_se = np.zeros_like(disc)
    for li in range(L - 1):
        diff = np.abs(vals[li + 1] - vals[li])
        for ti in range(T):
            p = int(np.argmax(diff[ti]))
            disc[li, ti] = diff[ti, p]
            if rep_vals is not None:
                d = rep_vals[:, li + 1, ti, p] - rep_vals[:, li, ti, p]
                disc_se[li, ti] = math.hypot(d.real.std(ddof=1), d.imag.std(ddof=1)) / math.sqrt(replicas)
            else:
                disc_se[li, ti] = math.hypot(ses[li, ti, p], ses[li + 1, ti, p])
    return ArkerydReport(levels, Bs, times, probes, vals, ses, engine, disc, disc_se, mom, mom_se)


def ladder_trend(report: ArkerydReport, k: float = 4.0) -> list[dict]:
    """Rows checking that consecutive discrepancies do not increase beyond noise."""
    rows = []
    for ti, t in enumerate(report.times):
        if t == 0.0:
            continue
        for li in range(len(report.levels) - 2):
            a, b = report.discrepancy[li, ti], report.discrepancy[li + 1, ti]
            slack = k * math.hypot(report.discrepancy_se[li, ti], report.discrepancy_se[li + 1, ti])
            rows.append({"t": t, "pair": (report.levels[li], report.levels[li + 1], report.levels[li + 2]),
                         "d_prev": a, "d_next": b, "slack": slack, "pass": b <= a + slack})
    return rows


def lipschitz_certificates(report: ArkerydReport, m2: float, Bbar: float | None = None,
                           kernel: KernelSpec | None = None, k: float = 8.0) -> list[dict]:
    """Rows of the xi- and t-Lipschitz certificates for every level.

    The time constant is (3/2) Bbar m2 |xi|^2 in physical time, with Bbar
    the x^2-moment of b ^ n (taken from ``kernel``) or the given uniform
    bound ``Bbar``.
    """
    rows = []
    probes = report.probes
    dxi = np.linalg.norm(probes[:, None, :] - probes[None, :, :], axis=2)
    iu = np.triu_indices(len(probes), 1)
    sq = math.sqrt(m2)
    for li, n in enumerate(report.levels):
        bb = kernel.moment(2.0, cap=float(n)) if kernel is not None else Bbar
        for ti, t in enumerate(report.times):
            v, s = report.values[li, ti], report.se[li, ti]
            lhs = np.abs(v[:, None] - v[None, :])[iu]
            rhs = sq * dxi[iu] + k * (s[:, None] + s[None, :])[iu]
            bad = lhs > rhs
            rows.append({"kind": "xi", "level": n, "t": t, "rows": int(lhs.size), "fail": int(bad.sum()),
                         "worst_margin": float((rhs - lhs).min()) if lhs.size else 0.0})
        r2 = np.einsum("ij,ij->i", probes, probes)
        for a in range(len(report.times)):
            for b in range(a + 1, len(report.times)):
                dt = report.times[b] - report.times[a]
                lhs = np.abs(report.values[li, b] - report.values[li, a])
                rhs = 1.5 * bb * m2 * r2 * dt + k * (report.se[li, a] + report.se[li, b])
                bad = lhs > rhs
                rows.append({"kind": "t", "level": n, "t": (report.times[a], report.times[b]), "rows": int(lhs.size),
                             "fail": int(bad.sum()), "worst_margin": float((rhs - lhs).min())})
    return rows


def relaxation_factor(kernel: KernelSpec, n: int | None, t: float) -> float:
    """e_n(t) = exp(-3 int x^2 (1 - x^2) (b ^ n) dx t); n = None for the untruncated kernel."""
    cap = None if n is None else float(n)
    h = kernel.moment(2.0, cap) - kernel.moment(4.0, cap)
    return math.exp(-3.0 * h * t)


def predicted_covariance(cov0: np.ndarray, factor: float) -> np.ndarray:
    """Centered covariance after relaxation: the traceless part decays by ``factor``."""
    iso = np.trace(cov0) / 3.0 * np.eye(3)
    return iso + factor * (cov0 - iso)


# ---------------------------------------------------------------------------
# Fourier-side bound


def _sphere_nodes(xi_hat, kernel, n_x, n_theta):
    x, w = quadrature(kernel, n_x)
    x = np.concatenate([x, -x])
    w = np.concatenate([w, w]) / 2.0
    th = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    return x, w, th


def _omegas(xi_hat, x, th):
    from .collision import _frames

    a, b = _frames(xi_hat[None])
    a, b = a[0], b[0]
    s = np.sqrt(1.0 - x * x)
    return (s[:, None, None] * (np.cos(th)[None, :, None] * a + np.sin(th)[None, :, None] * b)
            + x[:, None, None] * xi_hat)


def _centered_cf(chi):
    if isinstance(chi, Ensemble):
        pts = chi.points - chi.weights @ chi.points
        w = chi.weights
        m2 = float(w @ np.einsum("ij,ij->i", chi.points, chi.points))

        def f(eta):
            sh = eta.shape[:-1]
            e = eta.reshape(-1, 3)
            out = np.empty(len(e), dtype=complex)
            for lo in range(0, len(e), 256):
                out[lo:lo + 256] = np.exp(1j * e[lo:lo + 256] @ pts.T) @ w
            return out.reshape(sh)
        return f, m2
    mean = chi.mean
    return (lambda eta: chi.char_fn(eta) * np.exp(-1j * (eta @ mean))), chi.m2


def morimoto_bound(chi, kernel, xi, n_x: int = 64, n_theta: int = 64) -> tuple[float, float]:
    """(lhs, rhs) of |int [chi^(xi+) chi^(xi-) - chi^(xi)] b| <= (3/2) Bbar |xi|^2 m2.

    chi^ is replaced by its centered version exp(-i xi . mean) chi^(xi)
    before evaluation; m2 is the raw second moment.
    """
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi)
    if r == 0.0:
        raise ValueError("xi must be nonzero")
    if not kernel.is_cutoff:
        raise KernelError("the bound is evaluated for integrable kernels")
    cf, m2 = _centered_cf(chi)
    x, w, th = _sphere_nodes(xi / r, kernel, n_x, n_theta)
    om = _omegas(xi / r, x, th)
    proj = om @ xi
    xm = proj[..., None] * om
    xp = xi - xm
    integrand = cf(xp) * cf(xm) - cf(xi[None, None, :])
    lhs = abs(complex((integrand.mean(axis=1) * w).sum()))
    Bbar = kernel_moments(kernel).Bbar
    return lhs, 1.5 * Bbar * r * r * m2


def morimoto_divergence(alpha: float = 2.5, eps: float = 1e-2, xi=None, cov=None,
                        n_x: int = 48, n_theta: int = 256) -> float:
    """I(eps): the absolute integrand of the bound over {|x| >= eps} for b = |x|^-alpha.

    The Gaussian has zero mean and covariance ``cov`` (default: the
    degenerate counterexample covariance).  Panels in x are geometric so
    that every decade down to eps gets the same resolution.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 2.0 <= alpha < 3.0:
        raise KernelError("divergence study is for 2 <= alpha < 3")
    xi = np.array([0.0, 0.0, 1.0]) if xi is None else np.asarray(xi, dtype=float)
    chi = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV if cov is None else cov)
    r = np.linalg.norm(xi)
    xh = xi / r
    if eps >= 1.0:
        return 0.0
    g, gw = np.polynomial.legendre.leggauss(n_x)
    edges = np.geomspace(eps, 1.0, max(2, int(math.ceil(math.log10(1.0 / eps) * 4)) + 1))
    th = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    target = chi.char_fn(xi).real
    total = 0.0
    for sgn in (1.0, -1.0):
        for lo, hi in zip(edges[:-1], edges[1:]):
            x = lo + (hi - lo) * (g + 1.0) / 2.0
            wx = gw * (hi - lo) / 2.0
            om = _omegas(xh, sgn * x, th)
            xm = (om @ xi)[..., None] * om
            f = np.abs(chi.char_fn(xi - xm) * chi.char_fn(xm) - target)
            # du = dx dtheta / (4 pi): mean over theta, then half the x-integral
            total += (f.mean(axis=1) * wx * x ** (-alpha)).sum() / 2.0
    return float(total)
