"""McKean-tree representation of the solution.

A draw consists of a random tree size nu (geometric with mean e^t), a tree
grown by nu - 1 germinations at uniformly chosen leaves, one (phi, theta)
pair per internal node and nu leaf velocities from mu0.  Along every
root-to-leaf path the angles produce a weight pi_j (product of cos/sin), a
second-moment weight zeta_j, and a rotation O_j (product of M^l / M^r).
The random sum S(u) = sum_j pi_j (B(u) O_j e3) . V_j has characteristic
function equal to that of the solution in direction u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _jit
from .collision import CHUNK, LEAF_CAP, CollisionError, _draw, wild_sizes
from .kernel import Kernel, angle_sampler
from .rng import as_generator, child_seed, task_rng

E3 = np.array([0.0, 0.0, 1.0])


def m_left(phi: float, theta: float) -> np.ndarray:
    M = np.empty((3, 3))
    _jit.ml_matrix(math.cos(phi), math.sin(phi), math.cos(theta), math.sin(theta), M)
    return M


def m_right(phi: float, theta: float) -> np.ndarray:
    M = np.empty((3, 3))
    _jit.mr_matrix(math.cos(phi), math.sin(phi), math.cos(theta), math.sin(theta), M)
    return M


def section_B(u) -> np.ndarray:
    """Rotation about e3 x u taking e3 to u; the antipode maps to diag(1, -1, -1)."""
    u = np.asarray(u, dtype=float)
    n = np.linalg.norm(u)
    if n == 0.0:
        raise ValueError("section_B of the zero vector")
    u = u / n
    c = u[2]
    k = np.array([-u[1], u[0], 0.0])  # e3 x u
    s2 = k @ k
    if s2 < 1e-30:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    # (1 - c)/s^2 equals 1/(1 + c) but stays accurate near c = -1
    return np.eye(3) + K + K @ K * ((1.0 - c) / s2)


@dataclass
class TreeSample:
    t: float
    nu: int
    left: np.ndarray
    right: np.ndarray
    cphi: np.ndarray
    sphi: np.ndarray
    ctheta: np.ndarray
    stheta: np.ndarray
    V: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return 2 * self.nu - 1

    def shape(self, k: int = 0):
        """Nested-tuple shape of the subtree at node k (leaf = ())."""
        if self.left[k] < 0:
            return ()
        return (self.shape(self.left[k]), self.shape(self.right[k]))


@dataclass(frozen=True)
class WeightVector:
    pi: np.ndarray
    zeta: np.ndarray


def sample_tree(t: float, kernel: Kernel, rng, nu: int | None = None) -> TreeSample:
    rng = as_generator(rng)
    if nu is None:
        nu = int(wild_sizes(t, rng, 1)[0])
    if nu > LEAF_CAP:
        raise CollisionError(f"tree with {nu} leaves exceeds the cap {LEAF_CAP}")
    cap = 2 * nu
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    leafs = np.empty(nu, np.int64)
    cphi, sphi, cth, sth = (np.zeros(cap) for _ in range(4))
    _jit.reseed(child_seed(rng))
    count = _jit.grow_tree(nu, left, right, leafs)
    _jit.draw_angles(count, left, angle_sampler(kernel).table, cphi, sphi, cth, sth)
    return TreeSample(t, nu, left[:count], right[:count], cphi[:count], sphi[:count], cth[:count], sth[:count])


def attach_velocities(sample: TreeSample, draw_mu0, rng) -> TreeSample:
    rng = as_generator(rng)
    sample.V = _draw(draw_mu0, rng, sample.nu)
    return sample


def _weights(sample: TreeSample):
    n, cap = sample.nu, sample.n_nodes
    pi, zeta, O = np.empty(n), np.empty(n), np.empty((n, 3, 3))
    _jit.tree_weights(cap, sample.left, sample.right, sample.cphi, sample.sphi, sample.ctheta, sample.stheta,
                      pi, zeta, O, np.empty(cap, np.int64), np.empty(cap), np.empty(cap), np.empty((cap, 3, 3)))
    return pi, zeta, O


def pi_weights(sample: TreeSample, check: bool = True) -> WeightVector:
    pi, zeta, _ = _weights(sample)
    if check:
        err = abs(math.fsum(pi**2) - 1.0)
        if err > 1e-12:
            raise ArithmeticError(f"sum of pi^2 deviates from 1 by {err:.3e}")
    return WeightVector(pi, zeta)


def o_matrices(sample: TreeSample, check: bool = True) -> np.ndarray:
    _, _, O = _weights(sample)
    if check:
        dev = np.abs(np.einsum("kij,kil->kjl", O, O) - np.eye(3)).max()
        det = np.abs(np.linalg.det(O) - 1.0).max()
        if max(dev, det) > 1e-10:
            raise ArithmeticError(f"rotation defect {max(dev, det):.3e}")
    return O


def recursive_weights(sample: TreeSample, k: int = 0):
    """Reference evaluation of (pi, zeta, O) by the block recursion.

    Leaves of the left subtree come first; their weights are multiplied by
    cos(phi) and their rotations by M^l(phi, theta) on the left; the right
    block uses sin(phi) and M^r.  Plain Python, used as a test oracle.
    """
    if sample.left[k] < 0:
        return [1.0], [1.0], [np.eye(3)]
    pl, zl, Ol = recursive_weights(sample, int(sample.left[k]))
    pr, zr, Or = recursive_weights(sample, int(sample.right[k]))
    c, s = sample.cphi[k], sample.sphi[k]
    phi, theta = math.atan2(s, c), math.atan2(sample.stheta[k], sample.ctheta[k])
    Ml, Mr = m_left(phi, theta), m_right(phi, theta)
    pi = [p * c for p in pl] + [p * s for p in pr]
    zeta = [z * (1.5 * c * c - 0.5) for z in zl] + [z * (1.5 * s * s - 0.5) for z in zr]
    O = [Ml @ o for o in Ol] + [Mr @ o for o in Or]
    return pi, zeta, O


def psi_vectors(sample: TreeSample, u) -> np.ndarray:
    """psi_j(u) = B(u) O_j e3 for every leaf."""
    O = o_matrices(sample, check=False)
    return O[:, :, 2] @ section_B(u).T


def sample_S(sample: TreeSample, u) -> float:
    if sample.V is None:
        raise ValueError("attach velocities first")
    pi = pi_weights(sample, check=False).pi
    psi = psi_vectors(sample, u)
    return float(pi @ np.einsum("ij,ij->i", psi, sample.V))


# ---------------------------------------------------------------------------
# batch estimators


@dataclass
class McKeanBatch:
    S: np.ndarray        # (M, P) random sums
    sq: np.ndarray       # (M, P) sum pi^2 (psi . (V - vbar))^2
    pz: np.ndarray       # (M,) sum pi^2 zeta
    nu: np.ndarray       # (M,)
    pi_defect: float
    rot_defect: float


def mckean_batch(t: float, mu0, kernel: Kernel, us, M: int, rng, vbar=None) -> McKeanBatch:
    if not kernel.is_cutoff:
        raise CollisionError("the tree representation needs an integrable kernel")
    rng = as_generator(rng)
    us = np.atleast_2d(np.asarray(us, dtype=float))
    Bs = np.array([section_B(u) for u in us])
    vb = np.zeros(3) if vbar is None else np.asarray(vbar, dtype=float)
    table = angle_sampler(kernel).table
    S = np.empty((M, len(us)))
    sq = np.empty((M, len(us)))
    pz = np.empty(M)
    nus = np.empty(M, dtype=np.int64)
    diag = np.zeros(3)
    for lo in range(0, M, CHUNK):
        hi = min(M, lo + CHUNK)
        nu = wild_sizes(t, rng, hi - lo)
        if nu.max() > LEAF_CAP:
            raise CollisionError(f"tree with {int(nu.max())} leaves exceeds the cap {LEAF_CAP}")
        leaves = _draw(mu0, rng, int(nu.sum()))
        _jit.reseed(child_seed(rng))
        _jit.mckean_batch(nu, leaves, table, Bs, vb, S[lo:hi], sq[lo:hi], pz[lo:hi], diag)
        nus[lo:hi] = nu
    return McKeanBatch(S, sq, pz, nus, diag[0], max(diag[1], diag[2]))


def _mean_se(x: np.ndarray):
    x = np.asarray(x)
    return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(len(x)) if len(x) > 1 else np.zeros_like(x.mean(axis=0))


def estimate_charfn(t: float, rho, u, mu0, kernel: Kernel, M: int, seed: int = 0, rng=None):
    """Monte Carlo E[exp(i rho S(u))] with its standard error.

    ``rho`` and ``u`` may be arrays of matching length (one probe per row);
    all probes share the same tree draws.
    """
    rho_a = np.atleast_1d(np.asarray(rho, dtype=float))
    us = np.atleast_2d(np.asarray(u, dtype=float))
    if len(us) == 1 and len(rho_a) > 1:
        us = np.repeat(us, len(rho_a), axis=0)
    if len(rho_a) == 1 and len(us) > 1:
        rho_a = np.repeat(rho_a, len(us))
    if not (rho_a != 0).any():
        one = np.ones(len(rho_a), dtype=complex)
        return (one[0], 0.0) if np.ndim(rho) == 0 else (one, np.zeros(len(rho_a)))
    r = rng if rng is not None else task_rng(seed, 0)
    batch = mckean_batch(t, mu0, kernel, us, M, r)
    ph = batch.S * rho_a
    c_m, c_se = _mean_se(np.cos(ph))
    s_m, s_se = _mean_se(np.sin(ph))
    val = c_m + 1j * s_m
    se = np.hypot(c_se, s_se)
    val = np.where(rho_a == 0, 1.0 + 0j, val)
    se = np.where(rho_a == 0, 0.0, se)
    if np.ndim(rho) == 0 and len(rho_a) == 1:
        return complex(val[0]), float(se[0])
    return val, se


def second_moment_weight(t: float, kernel: Kernel, M: int, seed: int = 0, rng=None):
    """Monte Carlo E_t[sum_j pi_j^2 zeta_j] and its standard error."""
    from .datum import PointMass

    if t == 0.0:
        return 1.0, 0.0
    r = rng if rng is not None else task_rng(seed, 1)
    batch = mckean_batch(t, PointMass([0.0, 0.0, 0.0]), kernel, E3[None], M, r)
    m, se = _mean_se(batch.pz)
    return float(m), float(se)
