"""Property and oracle checks run by ``maxboltz suite`` and the acceptance tests.

Each check returns a :class:`Check` with a pass flag, a one-line summary
and the table rows behind it.  Sample sizes default to the desk-scale
values; every random stream is derived from ``seed`` and the check number.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.differentiate import derivative
from scipy.spatial.transform import Rotation

from .collision import kac_trajectory, wild_ensemble
from .datum import COUNTEREXAMPLE_COV, Gaussian, SphereUniform
from .ensemble import char_fn_many, from_points, moments, radial_char_fn
from .gfunction import build_G, check_properties, check_uniform_integrability, constants, energy_law
from .kernel import kernel_moments, make_kernel, truncate
from .mckean import estimate_charfn, mckean_batch, second_moment_weight
from .rng import child_seed, task_rng
from .singular import arkeryd_run, ladder_trend, lipschitz_certificates, morimoto_bound, morimoto_divergence
from .spectral import evolve, init_radial, maxwellian
from .weakform import (bump_psi, cos_psi, curve, curve_derivatives, derivative_norms, sin_psi,
                       villani_sup_check, weak_residual)

CONSTANT = {"family": "constant"}
POWERLAW = {"family": "powerlaw", "alpha": 2.5}
ANISO_MEAN = np.array([0.5, -0.2, 0.1])
ANISO_COV = np.array([[1.5, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    summary: str
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.name}: {self.summary} ({self.seconds:.1f} s)"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "summary": self.summary,
                "seconds": self.seconds, "rows": _plain(self.rows)}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.generic):
        return x.item()
    return x


def _rows_pass(rows) -> bool:
    return all(r["pass"] for r in rows)


# ---------------------------------------------------------------------------


def conservation(seed: int = 0, M: int = 200_000, times=(0.5, 1.0, 2.0, 5.0)) -> Check:
    kern = make_kernel(CONSTANT)
    mu0 = Gaussian(ANISO_MEAN, ANISO_COV)
    rows = []
    for k, t in enumerate(times):
        s = moments(wild_ensemble(mu0, kern, t, M, task_rng(seed, 1, k)))
        z_mean = np.abs(s.mean - mu0.mean) / s.mean_se
        z_m2 = abs(s.m2 - mu0.m2) / s.m2_se
        rows.append({"t": t, "z_mean_max": float(z_mean.max()), "z_m2": float(z_m2),
                     "pass": bool(z_mean.max() <= 4 and z_m2 <= 4)})
    worst = max(max(r["z_mean_max"], r["z_m2"]) for r in rows)
    return Check(1, "conservation", _rows_pass(rows), f"max |z| = {worst:.2f} <= 4", rows)


def cross_moment_relaxation(seed: int = 0, M: int = 200_000, times=(0.5, 1.0, 2.0, 5.0)) -> Check:
    kern = make_kernel(CONSTANT)
    mu0 = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV)
    rate = 1.0 - kernel_moments(kern).f1
    rows = []
    for k, t in enumerate(times):
        s = moments(wild_ensemble(mu0, kern, t, M, task_rng(seed, 2, k)))
        pred = 0.5 * math.exp(-rate * t)
        z = abs(s.cov_raw[1, 2] - pred) / s.cov_raw_se[1, 2]
        rows.append({"t": t, "v23": float(s.cov_raw[1, 2]), "predicted": pred, "z": float(z), "pass": bool(z <= 3)})
    worst = max(r["z"] for r in rows)
    return Check(2, "second-moment relaxation", _rows_pass(rows), f"rate {rate:.6f}, max |z| = {worst:.2f} <= 3",
                 rows)


def representation_equivalence(seed: int = 0, M: int = 100_000, n_probes: int = 20, t: float = 1.0) -> Check:
    kern = make_kernel(CONSTANT)
    mu0 = Gaussian(ANISO_MEAN, ANISO_COV)
    rng = task_rng(seed, 3, 0)
    rho = rng.uniform(0.2, 2.0, n_probes)
    u = rng.standard_normal((n_probes, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    mk, mk_se = estimate_charfn(t, rho, u, mu0, kern, M, rng=task_rng(seed, 3, 1))
    e = wild_ensemble(mu0, kern, t, M, task_rng(seed, 3, 2))
    wv, w_se = char_fn_many(e, rho[:, None] * u)
    z = np.abs(mk - wv) / np.hypot(mk_se, w_se)
    rows = [{"rho": float(r), "u": uu, "mckean": complex(a), "wild": complex(b), "z": float(zz), "pass": bool(zz <= 4)}
            for r, uu, a, b, zz in zip(rho, u, mk, wv, z)]
    for r in rows:
        r["mckean"] = [r["mckean"].real, r["mckean"].imag]
        r["wild"] = [r["wild"].real, r["wild"].imag]
    return Check(3, "McKean vs Wild", _rows_pass(rows), f"max |z| = {z.max():.2f} <= 4 over {n_probes} probes", rows)


def tree_invariant(seed: int = 0, M: int = 10_000, t: float = 5.0) -> Check:
    kern = make_kernel(CONSTANT)
    b = mckean_batch(t, Gaussian(np.zeros(3), np.eye(3)), kern, np.eye(3)[2:], M, task_rng(seed, 4))
    ok = b.pi_defect <= 1e-12 and b.rot_defect <= 1e-10
    row = {"trees": M, "max_nu": int(b.nu.max()), "pi_defect": b.pi_defect, "rot_defect": b.rot_defect, "pass": ok}
    return Check(4, "tree invariant", ok,
                 f"max |sum pi^2 - 1| = {b.pi_defect:.1e}, SO(3) defect {b.rot_defect:.1e}, max nu {b.nu.max()}",
                 [row])


def zeta_weight_law(seed: int = 0, M: int = 100_000, times=(1.0, 3.0)) -> Check:
    kernels = [("constant", make_kernel(CONSTANT)), ("powerlaw 2.5 level 64", truncate(make_kernel(POWERLAW), 64))]
    rows = []
    for i, (name, k) in enumerate(kernels):
        f1 = kernel_moments(k).f1
        for j, t in enumerate(times):
            m, se = second_moment_weight(t, k, M, rng=task_rng(seed, 5, i, j))
            pred = math.exp(-(1 - f1) * t)
            z = abs(m - pred) / se
            rows.append({"kernel": name, "t": t, "estimate": m, "se": se, "predicted": pred, "z": z, "pass": z <= 4})
    worst = max(r["z"] for r in rows)
    return Check(5, "zeta-weight law", _rows_pass(rows), f"max |z| = {worst:.2f} <= 4", rows)


def spectral_oracle(seed: int = 0, M: int = 200_000, t: float = 2.0) -> Check:
    kern = make_kernel(CONSTANT)
    mu0 = SphereUniform(1.0)
    phi = evolve(init_radial(mu0.radial_char_fn), kern, t)[-1]
    radii = np.linspace(0.25, 8.0, 32)
    e = wild_ensemble(mu0, kern, t, M, task_rng(seed, 6))
    val, se = radial_char_fn(e, radii)
    diff = np.abs(phi(radii) - val)
    rows = [{"r": float(r), "spectral": float(a), "particles": float(b), "se": float(s),
             "pass": bool(d <= 5e-3 + 4 * s)} for r, a, b, s, d in zip(radii, phi(radii), val, se, diff)]
    m0 = init_radial(maxwellian(3.0))
    snaps = evolve(m0, kern, 5.0, out_times=np.linspace(1.0, 5.0, 5))
    drift = max(float(np.abs(s.values - m0.values).max()) for s in snaps)
    rows.append({"maxwellian_drift": drift, "pass": drift < 1e-6})
    return Check(6, "spectral oracle", _rows_pass(rows),
                 f"max discrepancy {diff.max():.2e} (bound 5e-3 + 4 SE), Maxwellian drift {drift:.1e} < 1e-6", rows)


def arkeryd_ladder(seed: int = 0, M: int = 100_000, levels=(4, 16, 64, 256), times=(0.5, 1.0, 2.0)) -> Check:
    kern = make_kernel(POWERLAW)
    mu0 = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV)
    rep = arkeryd_run(kern, mu0, levels, times, M=M, seed=child_seed(task_rng(seed, 7)), engine="kac")
    trend = ladder_trend(rep)
    certs = lipschitz_certificates(rep, mu0.m2, kernel=kern, k=8.0)
    n_rows = sum(c["rows"] for c in certs)
    n_fail = sum(c["fail"] for c in certs)
    ok = _rows_pass(trend) and n_fail == 0
    rows = [{"kind": "trend", **r} for r in trend] + certs
    return Check(7, "Arkeryd ladder", ok,
                 f"{sum(r['pass'] for r in trend)}/{len(trend)} trend rows, {n_rows - n_fail}/{n_rows} certificate rows",
                 rows)


def morimoto(seed: int = 0, trials: int = 1000, eps_list=(1e-2, 1e-3, 1e-4)) -> Check:
    rng = task_rng(seed, 8)
    worst = 0.0
    fails = 0
    for _ in range(trials):
        A = rng.standard_normal((3, 3))
        chi = Gaussian(rng.normal(0, 1, 3), A @ A.T * rng.uniform(0.1, 1.0))
        xi = rng.standard_normal(3) * rng.uniform(0.1, 3.0)
        if rng.random() < 0.5:
            kern = make_kernel(CONSTANT)
        else:
            alpha = rng.uniform(2.0, 2.9)
            kern = truncate(make_kernel({"family": "powerlaw", "alpha": alpha}), int(rng.choice([4, 16, 64, 256])))
        lhs, rhs = morimoto_bound(chi, kern, xi, n_x=32, n_theta=32)
        worst = max(worst, lhs / rhs)
        fails += lhs > rhs * (1 + 1e-9)
    I = [morimoto_divergence(2.5, e) for e in eps_list]
    mono = all(b >= a for a, b in zip(I, I[1:]))
    ratio = I[-1] / I[0]
    rows = [{"kind": "bound", "trials": trials, "fail": int(fails), "max_ratio": worst, "pass": fails == 0},
            {"kind": "divergence", "eps": list(eps_list), "I": I, "ratio": ratio, "pass": mono and ratio >= 3}]
    return Check(8, "Morimoto bound", _rows_pass(rows),
                 f"{trials - fails}/{trials} bound trials (max lhs/rhs {worst:.3f}), I ratio {ratio:.2f} >= 3, "
                 f"monotone {mono}", rows)


def g_function(seed: int = 0, M: int = 100_000, times=(0.0, 1.0, 2.0, 5.0)) -> Check:
    kern = make_kernel(CONSTANT)
    rows = []
    needed = ("ii", "v", "vi", "i'", "ii'", "iii'", "iv'")
    for i, (name, mu0) in enumerate([("sphere", SphereUniform(1.0)), ("gaussian", Gaussian(np.zeros(3), np.eye(3)))]):
        G = build_G(energy_law(mu0))
        props = check_properties(G, task_rng(seed, 9, i, 0), 1000)
        rows.append({"datum": name, "kind": "properties", **props, "pass": all(props[k] for k in needed)})
        _, _, C = constants(G, mu0.m2)
        traj = [(t, wild_ensemble(mu0, kern, t, M, task_rng(seed, 9, i, 1, j))) for j, t in enumerate(times)]
        for r in check_uniform_integrability(traj, G, C):
            rows.append({"datum": name, **r})
    n_ok = sum(r["pass"] for r in rows)
    return Check(9, "G function", _rows_pass(rows), f"{n_ok}/{len(rows)} rows", rows)


def _curve_stack(v, w, th):
    """f(y, k): rows k of the stacked components (v*, w*, v*', w*')."""

    def f(y, k):
        V, W = curve(v, w, y, th)
        d1, _, e1, _ = curve_derivatives(v, w, y, th)
        vals = np.concatenate([V, W, d1, e1], axis=-1)
        return np.take_along_axis(vals, k.astype(int)[..., None], axis=-1)[..., 0]
    return f


def lemma_numerics(seed: int = 0, n_grid: int = 1000, n_points: int = 1000) -> Check:
    m1, r2, p1, p2 = villani_sup_check(n_grid, n_grid)
    rng = task_rng(seed, 10)
    worst = 0.0
    tol = {"atol": 1e-13, "rtol": 1e-13}
    for _ in range(n_points):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        x, th = rng.uniform(-0.9, 0.9), rng.uniform(0, 2 * math.pi)
        fd = derivative(_curve_stack(v, w, th), np.full(12, x), args=(np.arange(12),), initial_step=0.02,
                        tolerances=tol).df
        d1, d2, e1, e2 = curve_derivatives(v, w, x, th)
        closed = np.concatenate([d1, e1, d2, e2])
        first, second = derivative_norms(np.linalg.norm(w - v), x)
        errs = [np.abs(fd - closed).max(), abs(d1 @ d1 - first) / max(1.0, first),
                abs(np.linalg.norm(d2) - second) / max(1.0, second)]
        worst = max(worst, max(errs))
    ok_fd = worst <= 1e-8
    rows = [{"max_first": m1, "max_second_ratio": r2, "pass": p1 and p2},
            {"points": n_points, "max_fd_error": worst, "pass": ok_fd}]
    return Check(10, "derivative bounds", _rows_pass(rows),
                 f"max first {m1:.4f} <= 14, second/bound {r2:.3f} <= 1, FD error {worst:.1e} <= 1e-8", rows)


def weak_form(seed: int = 0, M: int = 100_000, n_pairs: int = 20_000, n_snap: int = 9, t_end: float = 2.0) -> Check:
    ts = np.linspace(0.0, t_end, n_snap)
    mu0 = Gaussian(np.array([0.3, 0.0, 0.0]), np.diag([1.5, 1.0, 0.5]))
    const = make_kernel(CONSTANT)
    trunc = truncate(make_kernel(POWERLAW), 64)
    wild = [(t, wild_ensemble(mu0, const, t, M, task_rng(seed, 11, 0, j))) for j, t in enumerate(ts)]
    kac = kac_trajectory(mu0, trunc, trunc.B * ts, M, task_rng(seed, 11, 1))
    kac = [(t, from_points(p)) for t, p in zip(ts, kac)]
    rows = []
    worst = 0.0
    for i, psi in enumerate([cos_psi([1, 0, 0]), sin_psi([1, 1, 0]), bump_psi()]):
        for j, (name, kern, traj, scale) in enumerate([("constant", const, wild, 1.0),
                                                       ("powerlaw 2.5 level 64", trunc, kac, trunc.B)]):
            res = weak_residual(traj, psi, kern, n_pairs=n_pairs, time_scale=scale, rng=task_rng(seed, 11, 2, i, j))
            for r in res.rows()[1:]:
                rows.append({"psi": psi.name, "kernel": name, **r})
                worst = max(worst, abs(r["residual"]) / r["uncertainty"])
    return Check(11, "weak-form residual", _rows_pass(rows), f"max |residual|/uncertainty = {worst:.2f} <= 4", rows)


def rotation_equivariance(seed: int = 0, M: int = 100_000, t: float = 1.0) -> Check:
    R = Rotation.random(random_state=task_rng(seed, 12, 0)).as_matrix()
    mu0 = Gaussian(ANISO_MEAN, ANISO_COV)
    rows = []
    worst = 0.0
    for i, (name, kern) in enumerate([("constant", make_kernel(CONSTANT)),
                                      ("powerlaw 2.5 level 4", truncate(make_kernel(POWERLAW), 4))]):
        tt = t * getattr(kern, "B", 1.0)
        a = moments(wild_ensemble(mu0.rotated(R), kern, tt, M, task_rng(seed, 12, 1, i)))
        b = moments(wild_ensemble(mu0, kern, tt, M, task_rng(seed, 12, 2, i)).rotate(R))
        z_mean = np.abs(a.mean - b.mean) / np.hypot(a.mean_se, b.mean_se)
        z_cov = np.abs(a.cov_raw - b.cov_raw) / np.hypot(a.cov_raw_se, b.cov_raw_se)
        z = float(max(z_mean.max(), z_cov.max()))
        worst = max(worst, z)
        rows.append({"kernel": name, "z_mean_max": float(z_mean.max()), "z_cov_max": float(z_cov.max()),
                     "pass": z <= 4})
    return Check(12, "rotation equivariance", _rows_pass(rows), f"max |z| = {worst:.2f} <= 4", rows)


CHECKS = {
    1: conservation,
    2: cross_moment_relaxation,
    3: representation_equivalence,
    4: tree_invariant,
    5: zeta_weight_law,
    6: spectral_oracle,
    7: arkeryd_ladder,
    8: morimoto,
    9: g_function,
    10: lemma_numerics,
    11: weak_form,
    12: rotation_equivariance,
}


def run_check(number: int, seed: int = 0, **kw) -> Check:
    t0 = time.perf_counter()
    c = CHECKS[number](seed=seed, **kw)
    c.seconds = time.perf_counter() - t0
    return c
