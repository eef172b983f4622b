"""Second-order weak form for very weak cutoff kernels.

Along the curve x -> v*(x) = v + d (x sqrt(1 - x^2) e_theta + x^2 u),
x = cos(phi), the post-collision pair is smooth in x, and a Taylor
expansion with integral remainder removes the first-order term after the
theta average.  What remains is A_psi(v, w, x), which is integrable
against x^2 b(x) whenever int x^2 b < infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from . import _jit
from .kernel import Kernel, quadrature
from .rng import as_generator


# ---------------------------------------------------------------------------
# curve derivatives


def derivative_norms(d: float, x):
    """(|dv*/dx|^2, |d^2 v*/dx^2|) for |w - v| = d."""
    x = np.asarray(x, dtype=float)
    if (np.abs(x) >= 1).any():
        raise ValueError("derivative norms need |x| < 1")
    first = d * d * ((1 - 2 * x * x) ** 2 / (1 - x * x) + 4 * x * x)
    second = d * np.sqrt((-3 * x + 2 * x**3) ** 2 / (1 - x * x) ** 3 + 4.0)
    return first, second


def curve(v, w, x, theta):
    """(v*(x), w*(x)) along the angular curve at azimuth theta; x may be an array."""
    from .collision import orthobasis

    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    d = np.linalg.norm(w - v)
    if d == 0.0:
        return v.copy(), w.copy()
    fr = orthobasis((w - v) / d)
    e = math.cos(theta) * fr.a + math.sin(theta) * fr.b
    x = np.asarray(x, dtype=float)[..., None]
    step = d * (x * np.sqrt(1 - x * x) * e + x * x * fr.u)
    return v + step, w - step


def curve_derivatives(v, w, x, theta):
    """Closed forms (v*', v*'', w*', w*'') at x (scalar or array)."""
    from .collision import orthobasis

    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    d = np.linalg.norm(w - v)
    if d == 0.0:
        z = np.zeros(3)
        return z, z, z, z
    fr = orthobasis((w - v) / d)
    e = math.cos(theta) * fr.a + math.sin(theta) * fr.b
    x = np.asarray(x, dtype=float)[..., None]
    s = np.sqrt(1 - x * x)
    d1 = d * ((1 - 2 * x * x) / s * e + 2 * x * fr.u)
    d2 = d * ((-3 * x + 2 * x**3) / s**3 * e + 2 * fr.u)
    return d1, d2, -d1, -d2


def villani_sup_check(n_s: int = 1000, n_xi: int = 1000):
    """Maxima of the two weighted derivative brackets on an (s, xi) grid in (0, 1)^2.

    Returns (max of the first, max over s of second / bound(s), pass1, pass2)
    where bound(s) = 2 sqrt(13)/sqrt(1 - s) + 2.
    """
    s = (np.arange(n_s) + 0.5) / n_s
    xi = (np.arange(n_xi) + 0.5) / n_xi
    S, X = np.meshgrid(s, xi, indexing="ij")
    y = S * X
    first = (1 - S) * ((1 - 2 * y * y) ** 2 / (1 - y * y) + 4 * y * y)
    second = (1 - S) * np.sqrt((-3 * y + 2 * y**3) ** 2 / (1 - y * y) ** 3 + 4.0)
    m1 = float(first.max())
    bound = 2 * math.sqrt(13) / np.sqrt(1 - s) + 2
    ratio2 = second.max(axis=1) / bound
    return m1, float(ratio2.max()), m1 <= 14.0, bool((ratio2 <= 1.0).all())


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """psi in the class of bounded C^2 functions with bounded derivatives."""

    kind: int              # 0 cos(k.v), 1 sin(k.v), 2 bump
    par: np.ndarray
    sup0: float
    sup1: float
    sup2: float
    name: str = ""

    __test__ = False  # not a pytest class

    def value(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == 0:
            return np.cos(v @ self.par[:3])
        if self.kind == 1:
            return np.sin(v @ self.par[:3])
        q = np.sum((v - self.par[:3]) ** 2, axis=-1) / self.par[3] ** 2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(q < 1, np.exp(-1.0 / np.where(q < 1, 1 - q, 1.0)), 0.0)

    __call__ = value

    def grad_hess(self, v):
        g = np.empty(3)
        H = np.empty((3, 3))
        _jit._psi_derivs(self.kind, self.par, np.asarray(v, dtype=float), g, H)
        return g, H

    @property
    def K(self) -> float:
        """Constant in |A_psi| <= K (1 + |v - w|^2) from the derivative bounds.

        The weighted sup bounds give int_0^1 (1 - s) |bracket| ds <=
        2 [sup1 d (4 sqrt13 + 2) + 14 sup2 d^2]; the theta average and the
        1/(8 pi) prefactor contribute 1/4, and d <= (1 + d^2)/2.
        """
        return self.sup1 * (4 * math.sqrt(13) + 2) / 4.0 + 7.0 * self.sup2


def cos_psi(k) -> TestFunction:
    k = np.asarray(k, dtype=float)
    n = float(np.linalg.norm(k))
    return TestFunction(0, np.concatenate([k, [0.0]]), 1.0, n, n * n, f"cos:{','.join(map(str, k))}")


def sin_psi(k) -> TestFunction:
    k = np.asarray(k, dtype=float)
    n = float(np.linalg.norm(k))
    return TestFunction(1, np.concatenate([k, [0.0]]), 1.0, n, n * n, f"sin:{','.join(map(str, k))}")


def bump_psi(center=(0.0, 0.0, 0.0), radius: float = 2.0) -> TestFunction:
    """exp(-1/(1 - |v - c|^2/R^2)) inside the ball, 0 outside.

    The derivative bounds are maxima over a fine radial grid of the radial
    profile's derivatives, inflated by 1% to cover the grid spacing.
    """
    c = np.asarray(center, dtype=float)
    R = float(radius)
    rho = np.linspace(0.0, R * (1 - 1e-9), 200_001)
    q = (rho / R) ** 2
    om = 1 - q
    f = np.exp(-1 / om)
    F1 = -f / om**2
    F2 = f * (1 - 2 * om) / om**4
    # psi = F(q): radial derivative 2 rho F1 / R^2, Hessian eigenvalues
    # 2 F1 / R^2 (tangential) and 2 F1 / R^2 + 4 rho^2 F2 / R^4 (radial)
    d1 = np.abs(2 * rho * F1 / R**2)
    h_t = np.abs(2 * F1 / R**2)
    h_r = np.abs(2 * F1 / R**2 + 4 * rho**2 * F2 / R**4)
    return TestFunction(2, np.concatenate([c, [R]]), math.exp(-1.0), 1.01 * d1.max(),
                        1.01 * max(h_t.max(), h_r.max()), f"bump:{R:g}")


def parse_psi(text: str) -> TestFunction:
    kind, _, arg = text.partition(":")
    vals = [float(a) for a in arg.split(",")] if arg else []
    if kind == "cos":
        return cos_psi(vals)
    if kind == "sin":
        return sin_psi(vals)
    if kind == "bump":
        return bump_psi(radius=vals[0] if vals else 2.0)
    raise ValueError(f"unknown test function {text!r}")


# ---------------------------------------------------------------------------
# A_psi


def s_rule(n: int):
    """Nodes and weights for int_0^1 (1 - s) f(s) ds (Gauss-Jacobi)."""
    y, w = roots_jacobi(n, 1.0, 0.0)
    return (y + 1.0) / 2.0, w / 4.0


def a_psi(psi: TestFunction, v, w, xi: float, n_s: int = 32, n_theta: int = 32) -> float:
    """A_psi(v, w, xi) by a product rule: Gauss-Jacobi in s, trapezoid in theta."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.array_equal(v, w):
        return 0.0
    sn, sw = s_rule(n_s)
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    total = 0.0
    for t in th:
        ct, st = math.cos(t), math.sin(t)
        total += sum(wm * _jit.a_psi_bracket(psi.kind, psi.par, v, w, sm * xi, ct, st) for sm, wm in zip(sn, sw))
    # (1/8 pi) * 2 pi * mean over theta
    return total / n_theta / 4.0


def kernel_nodes(kernel: Kernel, n: int = 64, fold: bool = False):
    """Nodes/weights on [-1, 1] for int f(x) b(|x|) dx (mirrored half-rule).

    ``fold`` keeps only x > 0 with doubled weights.  This is exact whenever
    the theta rule is invariant under theta -> theta + pi, because
    A_psi(v, w, -x) at theta equals A_psi(v, w, x) at theta + pi.
    """
    x, wx = quadrature(kernel, n)
    if fold:
        return x, 2.0 * wx
    return np.concatenate([x, -x]), np.concatenate([wx, wx])


def collision_rhs(psi: TestFunction, V, W, kernel: Kernel, n_x: int = 24, n_s: int = 12, n_theta: int = 2,
                  rng=None) -> np.ndarray:
    """Per pair, int_{-1}^{1} A_psi(v, w, x) x^2 b(x) dx.

    With ``rng`` the theta rule is a randomly shifted trapezoid (unbiased
    for every shift); otherwise a fixed trapezoid.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    xk, wk = kernel_nodes(kernel, n_x, fold=n_theta % 2 == 0)
    sn, sw = s_rule(n_s)
    base = 2 * math.pi * np.arange(n_theta) / n_theta
    shift = np.zeros(len(V)) if rng is None else as_generator(rng).uniform(0, 2 * math.pi / n_theta, len(V))
    thetas = shift[:, None] + base[None, :]
    return _jit.pair_rhs(psi.kind, psi.par, V, W, xk, wk, sn, sw, thetas)


def direct_rhs(psi: TestFunction, v, w, kernel: Kernel, n_x: int = 128, n_theta: int = 256) -> float:
    """(1/2) int [psi(v*) + psi(w*) - psi(v) - psi(w)] b du for an integrable kernel."""
    from .collision import h_psi

    gain_v = h_psi(psi.value, v, w, kernel, n_theta, n_x)
    gain_w = h_psi(psi.value, w, v, kernel, n_theta, n_x)
    return 0.5 * (gain_v + gain_w - psi.value(np.asarray(v)) - psi.value(np.asarray(w)))


# ---------------------------------------------------------------------------
# residual


@dataclass
class Residual:
    t: np.ndarray
    residual: np.ndarray
    uncertainty: np.ndarray
    mc: np.ndarray
    time_step: np.ndarray
    quadrature: np.ndarray
    rhs: np.ndarray
    rhs_se: np.ndarray

    def rows(self):
        return [{"t": float(t), "residual": float(r), "uncertainty": float(u), "pass": bool(abs(r) <= 4 * u)}
                for t, r, u in zip(self.t, self.residual, self.uncertainty)]


def _ensemble_mean(psi, e):
    f = psi.value(e.points)
    m = float(e.weights @ f)
    se = float(np.sqrt(e.weights @ (f - m) ** 2 / max(len(f) - 1, 1))) if len(f) > 1 else 0.0
    return m, se


def pair_average(psi: TestFunction, e, kernel: Kernel, n_pairs: int, rng, n_x: int = 24, n_s: int = 12,
                 n_theta: int = 2):
    """U-statistic estimate of the double average of the per-pair collision term."""
    rng = as_generator(rng)
    N = len(e.points)
    if N < 2 or np.ptp(e.points, axis=0).max() == 0.0:
        return 0.0, 0.0
    i = rng.choice(N, size=n_pairs, p=e.weights)
    j = rng.choice(N, size=n_pairs, p=e.weights)
    keep = i != j
    vals = np.zeros(n_pairs)
    vals[keep] = collision_rhs(psi, e.points[i[keep]], e.points[j[keep]], kernel, n_x, n_s, n_theta, rng)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_pairs))


def weak_residual(trajectory, psi: TestFunction, kernel: Kernel, n_pairs: int = 20_000, time_scale: float = 1.0,
                  rng=None, n_x: int = 24, n_s: int = 12, n_theta: int = 2, quad_check: int = 500) -> Residual:
    """Integrated weak-form residual along a trajectory of (t, Ensemble).

    The collision term uses the normalized ``kernel``; ``time_scale``
    multiplies it (B_n for a truncated kernel run in physical time).  The
    uncertainty combines the Monte Carlo errors of both ensemble averages
    and of the pair averages (trapezoid-weighted), a Richardson estimate of
    the trapezoid error, and a quadrature refinement estimate.
    """
    rng = as_generator(rng)
    ts = np.array([t for t, _ in trajectory], dtype=float)
    if ts[0] != 0.0 or (np.diff(ts) <= 0).any():
        raise ValueError("trajectory times must start at 0 and increase")
    ens = [e for _, e in trajectory]
    means = [_ensemble_mean(psi, e) for e in ens]
    rhs = np.empty(len(ts))
    rhs_se = np.empty(len(ts))
    quad = np.zeros(len(ts))
    for k, e in enumerate(ens):
        m, se = pair_average(psi, e, kernel, n_pairs, rng, n_x, n_s, n_theta)
        rhs[k], rhs_se[k] = time_scale * m, time_scale * se
        if quad_check and len(e.points) > 1:
            # same pairs and shifts, coarse vs refined deterministic rules
            i = rng.integers(0, len(e.points), (2, quad_check))
            P, Q = e.points[i[0]], e.points[i[1]]
            sh = rng.uniform(0, 2 * math.pi, quad_check)
            coarse = _fixed_theta_rhs(psi, P, Q, kernel, n_x, n_s, sh)
            fine = _fixed_theta_rhs(psi, P, Q, kernel, 2 * n_x, 2 * n_s, sh)
            quad[k] = time_scale * abs(coarse.mean() - fine.mean())
    res = np.zeros(len(ts))
    mc = np.zeros(len(ts))
    step = np.zeros(len(ts))
    qerr = np.zeros(len(ts))
    for k in range(1, len(ts)):
        w = _trap_weights(ts[: k + 1])
        integral = w @ rhs[: k + 1]
        res[k] = means[k][0] - means[0][0] - integral
        mc[k] = math.sqrt(means[k][1] ** 2 + means[0][1] ** 2 + float((w * rhs_se[: k + 1]) @ (w * rhs_se[: k + 1])))
        if k % 2 == 0:
            coarse = _trap_weights(ts[: k + 1 : 2]) @ rhs[: k + 1 : 2]
            step[k] = abs(integral - coarse) / 3.0
        else:
            # odd index: Richardson on the even part plus the last panel's own estimate
            half = _trap_weights(ts[:k:2]) @ rhs[:k:2] if k >= 2 else 0.0
            full_even = _trap_weights(ts[:k]) @ rhs[:k] if k >= 2 else 0.0
            curv = abs(rhs[k] - 2 * rhs[k - 1] + rhs[k - 2]) if k >= 2 else abs(rhs[k] - rhs[k - 1])
            step[k] = abs(full_even - half) / 3.0 + curv * (ts[k] - ts[k - 1]) / 12.0
        qerr[k] = float(_trap_weights(ts[: k + 1]) @ quad[: k + 1])
    unc = mc + step + qerr
    return Residual(ts, res, unc, mc, step, qerr, rhs, rhs_se)


def _fixed_theta_rhs(psi, V, W, kernel, n_x, n_s, shifts, n_theta: int = 4):
    xk, wk = kernel_nodes(kernel, n_x, fold=True)
    sn, sw = s_rule(n_s)
    base = 2 * math.pi * np.arange(n_theta) / n_theta
    return _jit.pair_rhs(psi.kind, psi.par, V, W, xk, wk, sn, sw, shifts[:, None] + base[None, :])


def _trap_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros(len(t))
    if len(t) < 2:
        return w
    h = np.diff(t)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w
