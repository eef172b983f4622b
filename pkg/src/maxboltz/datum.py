"""Initial data: probability measures on R^3 that can be sampled exactly.

Each datum knows its first two moments and its characteristic function in
closed form, so it doubles as an oracle.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# covariance used by the divergence counterexample and several acceptance runs
COUNTEREXAMPLE_COV = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.5, 1.0]])


class DatumError(ValueError):
    pass


class Datum:
    isotropic = False

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def second_moments(self) -> np.ndarray:
        """Raw second moments, the matrix of E[v_i v_j]."""
        raise NotImplementedError

    @property
    def m2(self) -> float:
        return float(np.trace(self.second_moments))

    @property
    def cov(self) -> np.ndarray:
        m = self.mean
        return self.second_moments - np.outer(m, m)

    def char_fn(self, xi) -> np.ndarray:
        raise NotImplementedError

    def radial_char_fn(self, r):
        """phi_0(r) for isotropic data."""
        raise DatumError(f"{type(self).__name__} is not isotropic")

    def sample_energy(self, rng, size):
        """Draws of |v|^2 (used to build the uniform-integrability gauge)."""
        v = self.sample(rng, size)
        return np.einsum("ij,ij->i", v, v)

    def rotated(self, R: np.ndarray) -> "Datum":
        return Rotated(self, np.asarray(R, dtype=float))


@dataclass(frozen=True, eq=False)
class Gaussian(Datum):
    mu: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(3)
        S = np.asarray(self.sigma, dtype=float).reshape(3, 3)
        if not np.allclose(S, S.T, atol=1e-14):
            raise DatumError("covariance must be symmetric")
        lam, U = np.linalg.eigh(S)
        if lam.min() < -1e-12 * max(1.0, lam.max()):
            raise DatumError("covariance must be positive semidefinite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", S)
        # degenerate covariances are fine: sample through the eigenbasis
        object.__setattr__(self, "_root", U * np.sqrt(np.clip(lam, 0.0, None)))

    @property
    def isotropic(self):
        return not self.mu.any() and np.allclose(self.sigma, self.sigma[0, 0] * np.eye(3))

    def sample(self, rng, size):
        z = rng.standard_normal((size, 3))
        return self.mu + z @ self._root.T

    @property
    def mean(self):
        return self.mu.copy()

    @property
    def second_moments(self):
        return self.sigma + np.outer(self.mu, self.mu)

    def char_fn(self, xi):
        xi = np.asarray(xi, dtype=float)
        quad = np.einsum("...i,ij,...j->...", xi, self.sigma, xi)
        return np.exp(1j * (xi @ self.mu) - 0.5 * quad)

    def radial_char_fn(self, r):
        if not self.isotropic:
            return super().radial_char_fn(r)
        return np.exp(-0.5 * self.sigma[0, 0] * np.asarray(r, dtype=float) ** 2)


@dataclass(frozen=True, eq=False)
class SphereUniform(Datum):
    radius: float = 1.0
    isotropic = True

    def sample(self, rng, size):
        z = rng.standard_normal((size, 3))
        return self.radius * z / np.linalg.norm(z, axis=1, keepdims=True)

    @property
    def mean(self):
        return np.zeros(3)

    @property
    def second_moments(self):
        return np.eye(3) * self.radius**2 / 3.0

    def char_fn(self, xi):
        r = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
        return self.radial_char_fn(r).astype(complex)

    def radial_char_fn(self, r):
        return np.sinc(self.radius * np.asarray(r, dtype=float) / np.pi)

    def sample_energy(self, rng, size):
        return np.full(size, self.radius**2)


@dataclass(frozen=True, eq=False)
class TwoPoint(Datum):
    """Mass p at ``a`` and 1 - p at ``b``."""

    a: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    b: np.ndarray = field(default_factory=lambda: np.array([-1.0, 0.0, 0.0]))
    p: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        if not 0.0 <= self.p <= 1.0:
            raise DatumError("two-point weight must lie in [0, 1]")

    def sample(self, rng, size):
        pick = rng.random(size) < self.p
        return np.where(pick[:, None], self.a, self.b)

    @property
    def mean(self):
        return self.p * self.a + (1 - self.p) * self.b

    @property
    def second_moments(self):
        return self.p * np.outer(self.a, self.a) + (1 - self.p) * np.outer(self.b, self.b)

    def char_fn(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.p * np.exp(1j * xi @ self.a) + (1 - self.p) * np.exp(1j * xi @ self.b)


def PointMass(v0) -> TwoPoint:
    v0 = np.asarray(v0, dtype=float)
    return TwoPoint(v0, v0, 1.0)


@dataclass(frozen=True, eq=False)
class Mixture(Datum):
    parts: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.parts) == 0 or len(w) != len(self.parts) or (w < 0).any() or w.sum() <= 0:
            raise DatumError("mixture needs matching parts and nonnegative weights")
        object.__setattr__(self, "weights", tuple(w / w.sum()))

    @property
    def isotropic(self):
        return all(p.isotropic for p in self.parts)

    def sample(self, rng, size):
        idx = rng.choice(len(self.parts), size=size, p=self.weights)
        out = np.empty((size, 3))
        for k, part in enumerate(self.parts):
            sel = idx == k
            if sel.any():
                out[sel] = part.sample(rng, int(sel.sum()))
        return out

    @property
    def mean(self):
        return sum(w * p.mean for w, p in zip(self.weights, self.parts))

    @property
    def second_moments(self):
        return sum(w * p.second_moments for w, p in zip(self.weights, self.parts))

    def char_fn(self, xi):
        return sum(w * p.char_fn(xi) for w, p in zip(self.weights, self.parts))

    def radial_char_fn(self, r):
        return sum(w * p.radial_char_fn(r) for w, p in zip(self.weights, self.parts))


@dataclass(frozen=True, eq=False)
class Empirical(Datum):
    """Resampling from a fixed weighted cloud (e.g. read from CSV)."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        w = np.full(len(pts), 1.0 / len(pts)) if self.weights is None else np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w / w.sum())

    def sample(self, rng, size):
        return self.points[rng.choice(len(self.points), size=size, p=self.weights)]

    @property
    def mean(self):
        return self.weights @ self.points

    @property
    def second_moments(self):
        return (self.points * self.weights[:, None]).T @ self.points

    def char_fn(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(1j * xi @ self.points.T) @ self.weights


@dataclass(frozen=True, eq=False)
class Rotated(Datum):
    """Push-forward of ``base`` under v -> R v."""

    base: Datum = None
    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def sample(self, rng, size):
        return self.base.sample(rng, size) @ self.R.T

    @property
    def mean(self):
        return self.R @ self.base.mean

    @property
    def second_moments(self):
        return self.R @ self.base.second_moments @ self.R.T

    def char_fn(self, xi):
        return self.base.char_fn(np.asarray(xi, dtype=float) @ self.R)


def read_points(path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DatumError(f"{path}: no rows")
    pts = np.array([[float(r["vx"]), float(r["vy"]), float(r["vz"])] for r in rows])
    w = np.array([float(r["w"]) for r in rows]) if "w" in rows[0] else None
    return pts, w


def make_datum(spec: dict) -> Datum:
    """Build a datum from its config form.

    >>> make_datum({"type": "gaussian", "mean": [0, 0, 0], "cov": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]})
    """
    kind = str(spec.get("type", "")).lower()
    if kind == "gaussian":
        cov = spec.get("cov")
        if cov is None:
            cov = np.eye(3) * float(spec.get("variance", 1.0))
        elif spec.get("cov") == "counterexample":
            cov = COUNTEREXAMPLE_COV
        return Gaussian(np.asarray(spec.get("mean", [0, 0, 0]), dtype=float), np.asarray(cov, dtype=float))
    if kind in ("sphere", "sphere-uniform"):
        return SphereUniform(float(spec.get("radius", 1.0)))
    if kind == "two-point":
        return TwoPoint(spec["a"], spec["b"], float(spec.get("p", 0.5)))
    if kind in ("delta", "point"):
        return PointMass(spec["v"])
    if kind == "mixture":
        return Mixture(tuple(make_datum(p) for p in spec["parts"]), tuple(spec["weights"]))
    if kind == "file":
        pts, w = read_points(spec["path"])
        return Empirical(pts, w)
    raise DatumError(f"unknown datum type {kind!r}")
