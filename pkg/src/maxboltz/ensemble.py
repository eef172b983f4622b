"""Weighted particle clouds and their estimators."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class EnsembleError(ValueError):
    pass


def _fsum_cols(a: np.ndarray) -> np.ndarray:
    """Correctly rounded column sums of a 2-D array."""
    return np.array([math.fsum(col) for col in a.T])


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    m2: float
    cov_raw: np.ndarray
    centered_energy: float
    # standard errors of the estimators above (iid-sample assumption)
    mean_se: np.ndarray | None = None
    m2_se: float | None = None
    cov_raw_se: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Ensemble:
    points: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __len__(self):
        return len(self.points)

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    @property
    def n_eff(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))

    def rotate(self, R) -> "Ensemble":
        return Ensemble(self.points @ np.asarray(R).T, self.weights, self.label)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["vx", "vy", "vz", "w"])
            for p, w in zip(self.points, self.weights):
                wr.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(w))])

    @classmethod
    def from_csv(cls, path, label=""):
        from .datum import read_points

        pts, w = read_points(path)
        return from_points(pts, w, label=label or str(path))

    def save_npz(self, path):
        np.savez(path, points=self.points, weights=self.weights, label=np.array(self.label))

    @classmethod
    def load_npz(cls, path):
        d = np.load(path)
        return cls(d["points"], d["weights"], str(d["label"]))


def from_points(points, weights=None, label: str = "") -> Ensemble:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise EnsembleError("points must be a nonempty (N, 3) array")
    if not np.isfinite(pts).all():
        raise EnsembleError("points contain NaN or infinite coordinates")
    if weights is None:
        w = np.full(len(pts), 1.0 / len(pts))
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise EnsembleError("one weight per point required")
        if not np.isfinite(w).all() or (w < 0).any():
            raise EnsembleError("weights must be finite and nonnegative")
        total = math.fsum(w)
        if total <= 0.0:
            raise EnsembleError("weights are all zero")
        w = w / total
    pts.setflags(write=False)
    w.setflags(write=False)
    return Ensemble(pts, w, label)


def _weighted_se(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """SE of sum(w x) treating points as iid draws with weights w."""
    mean = w @ values
    dev = values - mean
    var = (w[:, None] ** 2 * dev**2).sum(0) if dev.ndim == 2 else (w**2 * dev**2).sum()
    n_eff = 1.0 / np.sum(w**2)
    # unbiased correction for the plug-in variance
    return np.sqrt(var * n_eff / max(n_eff - 1.0, 1.0))


def moments(e: Ensemble) -> MomentSummary:
    p, w = e.points, e.weights
    wp = p * w[:, None]
    mean = _fsum_cols(wp)
    outer = (wp[:, :, None] * p[:, None, :]).reshape(len(p), 9)
    cov = _fsum_cols(outer).reshape(3, 3)
    m2 = float(np.trace(cov))
    energy = np.einsum("ij,ij->i", p, p)
    centered = max(m2 - float(mean @ mean), 0.0)
    if len(p) > 1:
        mean_se = _weighted_se(p, w)
        m2_se = float(_weighted_se(energy, w))
        cov_se = _weighted_se((p[:, :, None] * p[:, None, :]).reshape(len(p), 9), w).reshape(3, 3)
    else:
        mean_se, m2_se, cov_se = np.zeros(3), 0.0, np.zeros((3, 3))
    return MomentSummary(mean, m2, cov, centered, mean_se, m2_se, cov_se)


def char_fn(e: Ensemble, xi) -> tuple[complex, float]:
    """Weighted empirical characteristic function and its standard error."""
    xi = np.asarray(xi, dtype=float)
    phase = e.points @ xi
    c, s = np.cos(phase), np.sin(phase)
    w = e.weights
    val = complex(w @ c, w @ s)
    if len(w) < 2 or not xi.any():
        return val, 0.0
    se = math.hypot(float(_weighted_se(c, w)), float(_weighted_se(s, w)))
    return val, se


def char_fn_many(e: Ensemble, xis) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`char_fn` over an (K, 3) array of probes."""
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    vals = np.empty(len(xis), dtype=complex)
    ses = np.empty(len(xis))
    for k, xi in enumerate(xis):
        vals[k], ses[k] = char_fn(e, xi)
    return vals, ses


def radial_char_fn(e: Ensemble, r) -> tuple[np.ndarray, np.ndarray]:
    """Direction-averaged characteristic function E[sin(r|v|)/(r|v|)].

    For an isotropic law this is the characteristic function at any xi with
    |xi| = r, estimated with lower variance than a single direction.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    speed = np.linalg.norm(e.points, axis=1)
    vals, ses = np.empty(len(r)), np.empty(len(r))
    for k, rk in enumerate(r):
        f = np.sinc(rk * speed / np.pi)
        vals[k] = e.weights @ f
        ses[k] = _weighted_se(f, e.weights) if len(speed) > 1 else 0.0
    return vals, ses


def tail_energy(e: Ensemble, R: float) -> float:
    energy = np.einsum("ij,ij->i", e.points, e.points)
    sel = np.sqrt(energy) >= R
    return math.fsum(e.weights[sel] * energy[sel])


def tail_energy_se(e: Ensemble, R: float) -> float:
    energy = np.einsum("ij,ij->i", e.points, e.points)
    f = np.where(np.sqrt(energy) >= R, energy, 0.0)
    return float(_weighted_se(f, e.weights)) if len(f) > 1 else 0.0
