"""Binary collision geometry, the gain-operator sampler and the Wild sum sampler."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _jit
from .datum import Datum
from .ensemble import Ensemble, from_points
from .kernel import Kernel, angle_sampler
from .rng import as_generator, child_seed

LEAF_CAP = 10**6
CHUNK = 1 << 14


class CollisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CollisionFrame:
    a: np.ndarray
    b: np.ndarray
    u: np.ndarray


def orthobasis(u) -> CollisionFrame:
    u = np.asarray(u, dtype=float)
    n = np.linalg.norm(u)
    if n == 0.0:
        raise ValueError("orthobasis of the zero vector")
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"orthobasis needs a unit vector, |u| = {n}")
    a0, a1, a2, b0, b1, b2 = _jit.orthobasis(*u)
    return CollisionFrame(np.array([a0, a1, a2]), np.array([b0, b1, b2]), u)


def _frames(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized orthobasis for an (N, 3) array of unit vectors."""
    axis = np.argmin(np.abs(u), axis=1)
    e = np.eye(3)[axis]
    a = e - np.einsum("ij,ij->i", e, u)[:, None] * u
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    return a, np.cross(u, a)


def omega(u, theta, phi):
    """Unit vector at polar angle phi from u and azimuth theta in its frame."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    a, b = _frames(u)
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    return np.cos(theta) * np.sin(phi) * a + np.sin(theta) * np.sin(phi) * b + np.cos(phi) * u


def post_collision(v, w, theta, phi):
    """Post-collision velocities (v*, w*) in the omega representation.

    Broadcasts over leading dimensions; pairs with v = w are returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    single = v.ndim == 1 and w.ndim == 1
    v2, w2 = np.atleast_2d(v), np.atleast_2d(w)
    v2, w2 = np.broadcast_arrays(v2, w2)
    d = w2 - v2
    dn = np.linalg.norm(d, axis=1)
    same = dn == 0.0
    u = np.where(same[:, None], np.array([0.0, 0.0, 1.0]), d / np.where(same, 1.0, dn)[:, None])
    om = omega(u, np.broadcast_to(theta, dn.shape), np.broadcast_to(phi, dn.shape))
    p = np.einsum("ij,ij->i", d, om)[:, None] * om
    vs, ws = v2 + p, w2 - p
    if single:
        return vs[0], ws[0]
    return vs, ws


def _table(kernel):
    return angle_sampler(kernel).table


def _draw(draw, rng, size):
    """Samples from a Datum or a callable (rng, size) -> (size, 3)."""
    if isinstance(draw, Datum):
        return draw.sample(rng, size)
    return np.asarray(draw(rng, size), dtype=float).reshape(size, 3)


def sample_Q(draw_zeta, draw_eta, kernel: Kernel, rng, size: int | None = None):
    """Draws from Q[zeta, eta]: v ~ zeta, w ~ eta collide, v* is returned."""
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    v = _draw(draw_zeta, rng, m)
    w = _draw(draw_eta, rng, m)
    phi = angle_sampler(kernel).phi(rng, m)
    theta = rng.uniform(0.0, 2 * math.pi, m)
    vs, _ = post_collision(v, w, theta, phi)
    return vs[0] if size is None else vs


def wild_sizes(t: float, rng, size: int) -> np.ndarray:
    """nu with P[nu = n] = e^-t (1 - e^-t)^(n - 1)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return np.ones(size, dtype=np.int64)
    return rng.geometric(math.exp(-t), size).astype(np.int64)


def sample_wild(draw_mu0, kernel: Kernel, t: float, rng, size: int | None = None,
                leaf_cap: int = LEAF_CAP, return_nu: bool = False):
    """Draws from the Wild-sum solution at time t (normalized kernel).

    Sizes are generated chunk by chunk; within a chunk the numpy stream gives
    nu and the leaf velocities, and one child seed drives the compiled tree
    sampler.
    """
    if not kernel.is_cutoff:
        raise CollisionError("the Wild sampler needs an integrable kernel; truncate first")
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    table = _table(kernel)
    out = np.empty((m, 3))
    nus = np.empty(m, dtype=np.int64)
    for lo in range(0, m, CHUNK):
        hi = min(m, lo + CHUNK)
        nu = wild_sizes(t, rng, hi - lo)
        if nu.max() > leaf_cap:
            raise CollisionError(f"Wild sample needs {int(nu.max())} leaves, above the cap {leaf_cap}")
        leaves = _draw(draw_mu0, rng, int(nu.sum()))
        _jit.reseed(child_seed(rng))
        _jit.wild_batch(nu, leaves, table, out[lo:hi])
        nus[lo:hi] = nu
    res = out[0] if size is None else out
    return (res, nus) if return_nu else res


def wild_ensemble(mu0, kernel: Kernel, t: float, n: int, rng, label: str = "") -> Ensemble:
    pts = sample_wild(mu0, kernel, t, rng, n)
    return from_points(pts, label=label or f"wild t={t:g}")


def wild_feasible(t: float, budget: float = 2e3) -> bool:
    """Whether the mean tree size e^t stays below ``budget`` leaves."""
    return t <= math.log(budget)


def kac_trajectory(mu0, kernel: Kernel, times, n: int, rng, particles: np.ndarray | None = None):
    """N-particle uniform-pair jump process sampled at internal ``times``.

    Returns a list of point arrays, one per time.  This is the mean-field
    particle approximation of the same equation; it is used where the Wild
    tree size e^t would be prohibitive.
    """
    rng = as_generator(rng)
    times = np.asarray(times, dtype=float)
    order = np.argsort(times, kind="stable")
    V = _draw(mu0, rng, n) if particles is None else np.array(particles, dtype=float)
    out = np.empty((len(times), len(V), 3))
    _jit.reseed(child_seed(rng))
    _jit.kac_run(V, _table(kernel), times[order].copy(), out)
    res = np.empty_like(out)
    res[order] = out
    return [res[k] for k in range(len(times))]


# ---------------------------------------------------------------------------
# deterministic collision average


def h_psi(psi, v, w, kernel: Kernel, n_theta: int = 64, n_x: int = 128):
    """Integral of psi(v*) b(u . omega) over the unit sphere (normalized measure).

    ``psi`` maps an (..., 3) array to values.  Product rule: trapezoid in
    theta, kernel-weighted Gauss nodes in x = cos(phi) mirrored to [-1, 1].
    """
    from .kernel import quadrature

    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.array_equal(v, w):
        return psi(v)
    x, wx = quadrature(kernel, n_x)
    x = np.concatenate([x, -x])
    wx = np.concatenate([wx, wx]) / 2.0
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    d = w - v
    u = d / np.linalg.norm(d)
    X, T = np.meshgrid(x, theta, indexing="ij")
    om = omega(np.broadcast_to(u, (X.size, 3)), T.ravel(), np.arccos(X.ravel()))
    vs = v + (om @ d)[:, None] * om
    vals = np.asarray(psi(vs)).reshape(X.shape)
    return (vals.mean(axis=1) * wx).sum()
