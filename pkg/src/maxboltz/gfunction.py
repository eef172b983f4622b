"""Constructive de la Vallee-Poussin gauge for a law gamma of |v|^2.

G is piecewise linear with slope g = 1 on [0, 1) and g = A_n on
[2^n, 2^(n+1)).  The levels A_n are built from the tail integrals of gamma
so that int G dgamma < infinity while A_n grows without bound and at most
geometrically.  The build keeps a trace of every intermediate sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats


class GFunctionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# laws of |v|^2


class EnergyLaw:
    """A probability law gamma on [0, inf) described by its tail integral."""

    def tail(self, r: float) -> float:
        """int_{[r, inf)} x gamma(dx)."""
        raise NotImplementedError

    def mean(self) -> float:
        return self.tail(0.0)

    def integrate(self, f) -> float:
        raise NotImplementedError

    @property
    def support_max(self) -> float:
        return math.inf


class PointLaw(EnergyLaw):
    def __init__(self, x0: float):
        self.x0 = float(x0)

    def tail(self, r):
        return self.x0 if r <= self.x0 else 0.0

    def integrate(self, f):
        return float(f(np.array([self.x0]))[0])

    @property
    def support_max(self):
        return self.x0


class ScaledChi2(EnergyLaw):
    """|v|^2 for an isotropic centered Gaussian with per-axis variance s2."""

    def __init__(self, s2: float = 1.0):
        self.s2 = float(s2)

    def tail(self, r):
        # x chi2_3 density = 3 * chi2_5 density
        return 3.0 * self.s2 * special.chdtrc(5, max(r, 0.0) / self.s2)

    def integrate(self, f, breaks=()):
        dens = lambda x: stats.chi2.pdf(x / self.s2, 3) / self.s2
        edges = sorted({0.0, *[b for b in breaks if b < 400 * self.s2], 400.0 * self.s2})
        tot = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, _ = integrate.quad(lambda x: f(np.array([x]))[0] * dens(x), lo, hi, epsabs=1e-12, epsrel=1e-11, limit=200)
            tot += v
        return tot


class SampleLaw(EnergyLaw):
    """Weighted empirical law (e.g. |v|^2 of an ensemble)."""

    def __init__(self, x, w=None):
        x = np.asarray(x, dtype=float)
        w = np.full(len(x), 1.0 / len(x)) if w is None else np.asarray(w, dtype=float) / np.sum(w)
        order = np.argsort(x)
        self.x, self.w = x[order], w[order]
        xw = self.x * self.w
        self._cum = np.concatenate([np.cumsum(xw[::-1])[::-1], [0.0]])

    def tail(self, r):
        i = int(np.searchsorted(self.x, r, side="left"))
        return float(self._cum[i])

    def integrate(self, f):
        return float(self.w @ f(self.x))

    @property
    def support_max(self):
        return float(self.x[-1])


def energy_law(datum_or_samples, rng=None, n: int = 200_000) -> EnergyLaw:
    from .datum import Gaussian, SphereUniform, TwoPoint
    from .ensemble import Ensemble

    d = datum_or_samples
    if isinstance(d, EnergyLaw):
        return d
    if isinstance(d, SphereUniform):
        return PointLaw(d.radius**2)
    if isinstance(d, Gaussian) and d.isotropic:
        return ScaledChi2(d.sigma[0, 0])
    if isinstance(d, TwoPoint) and d.p in (0.0, 1.0):
        return PointLaw(float((d.a if d.p == 1.0 else d.b) @ (d.a if d.p == 1.0 else d.b)))
    if isinstance(d, Ensemble):
        return SampleLaw(np.einsum("ij,ij->i", d.points, d.points), d.weights)
    if hasattr(d, "sample_energy"):
        rng = np.random.default_rng(0) if rng is None else rng
        return SampleLaw(d.sample_energy(rng, n))
    return SampleLaw(np.asarray(d, dtype=float))


# ---------------------------------------------------------------------------
# construction


def _ginv(nodes_y: np.ndarray, y: float) -> float:
    """Generalized inverse inf{x >= 0 : h(x) >= y} of h(k) = nodes_y[k], linear between."""
    k = int(np.searchsorted(nodes_y, y, side="left"))
    if k == 0:
        return 0.0
    if k >= len(nodes_y):
        raise GFunctionError("h inverse requested beyond the built range")
    y0, y1 = nodes_y[k - 1], nodes_y[k]
    return (k - 1) + (y - y0) / (y1 - y0)


@dataclass
class GFunction:
    A: np.ndarray                 # A_0 .. A_N; A_n is the slope on [2^n, 2^(n+1))
    lambda1: float
    lambda2: float
    lambda3: float
    trace: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        # knots 0, 1, 2, 4, ... and G at each knot
        n = len(self.A)
        self.knots = np.concatenate([[0.0], 2.0 ** np.arange(n + 1)])
        slopes = np.concatenate([[1.0], self.A])
        widths = np.diff(self.knots)
        self.G_knots = np.concatenate([[0.0], np.cumsum(slopes * widths)])
        self.slopes = slopes

    @property
    def x_max(self) -> float:
        return float(self.knots[-1])

    def _cell(self, x):
        x = np.asarray(x, dtype=float)
        if (x < 0).any():
            raise ValueError("G is defined on [0, inf)")
        k = np.searchsorted(self.knots, x, side="right") - 1
        return x, np.clip(k, 0, len(self.slopes) - 1)

    def g(self, x):
        """Right-continuous slope G'(x+)."""
        x, k = self._cell(x)
        return self.slopes[k]

    def __call__(self, x):
        x, k = self._cell(x)
        return self.G_knots[k] + self.slopes[k] * (x - self.knots[k])

    G = __call__

    def star(self, x):
        """G*(x) = G(x^2)."""
        return self(np.asarray(x, dtype=float) ** 2)

    def frak(self, x):
        """G(x) / x (continuous extension 1 at 0)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(x > 0, self(x) / np.where(x > 0, x, 1.0), 1.0)

    def q(self, x):
        """q(x) = x^-3 int_0^x G(y^2) dy, with q(0) = 1/3; closed form per cell."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if (x < 0).any():
            raise ValueError("q is defined on [0, inf)")
        yk = np.sqrt(self.knots)  # cell edges in y
        # integral of G(y^2) over each full y-cell
        c0 = self.G_knots[:-1] - self.slopes * self.knots[:-1]
        full = c0 * np.diff(yk) + self.slopes * np.diff(yk**3) / 3.0
        cum = np.concatenate([[0.0], np.cumsum(full)])
        k = np.clip(np.searchsorted(yk, x, side="right") - 1, 0, len(self.slopes) - 1)
        part = c0[k] * (x - yk[k]) + self.slopes[k] * (x**3 - yk[k] ** 3) / 3.0
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(x > 0, (cum[k] + part) / np.where(x > 0, x, 1.0) ** 3, 1.0 / 3.0)
        return out if out.size > 1 else float(out[0])

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "lambda1": self.lambda1, "lambda2": self.lambda2, "lambda3": self.lambda3,
                "trace": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.trace.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "GFunction":
        return cls(np.asarray(d["A"]), d["lambda1"], d["lambda2"], d["lambda3"], d.get("trace", {}))


def build_G(gamma, n_levels: int = 48, r_limit: int = 1 << 16, starred: bool = False) -> GFunction:
    """Build G for the law ``gamma`` of |v|^2.

    r_n is the least integer r with int_{[r, inf)} x dgamma <= 2^-n, raised
    to r_{n-1} + 1 when needed so that the sequence is strictly increasing;
    B_k counts the r_j <= k; B*_n is the next larger value of the B sequence
    (B*_1 = B_1); h interpolates h(0) = 0, h(n) = B*_n + 1; and
    A_n = h^-1(B_n + 1) + 1 with A_0 = A_1.  ``starred=True`` uses B*_n in
    place of B_n.
    """
    law = energy_law(gamma)
    if not math.isfinite(law.mean()):
        raise GFunctionError("gamma must have a finite first moment")
    # r_n, n = 1, 2, ...  until r exceeds the index range we need
    r = []
    unresolved_from = None
    prev = -1
    n = 1
    lo = 0
    while True:
        target = 2.0**-n
        # minimal integer with tail <= target (tail nonincreasing in r)
        cand = max(lo, 0)
        if law.tail(cand) > target:
            step = 1
            while law.tail(cand + step) > target:
                step *= 2
                if cand + step > r_limit * 4:
                    break
            a, b = cand + step // 2, cand + step
            while b - a > 1:
                mid = (a + b) // 2
                if law.tail(mid) > target:
                    a = mid
                else:
                    b = mid
            cand = b
        lo = cand
        rn = max(cand, prev + 1)
        if unresolved_from is None and law.tail(cand) == 0.0 and math.isfinite(law.support_max) \
                and isinstance(law, SampleLaw):
            unresolved_from = n
        r.append(rn)
        prev = rn
        n += 1
        if rn > r_limit:
            break
    r = np.array(r, dtype=np.int64)
    K = int(r[-1])  # B_k is exact for k < r[-1]
    ks = np.arange(0, K)
    B = np.searchsorted(r, ks, side="right")  # B[k] = #{j : r_j <= k}
    # B*_n for n = 1 .. K-1: next larger value among B_m
    Bstar = np.empty(K, dtype=np.int64)
    Bstar[0] = 0
    if K > 1:
        Bstar[1] = B[1]
    uniq = np.unique(B[1:])
    for k in range(2, K):
        j = int(np.searchsorted(uniq, B[k], side="right"))
        Bstar[k] = uniq[j] if j < len(uniq) else -1
    valid = int(np.argmax(Bstar[1:] < 0)) if (Bstar[1:] < 0).any() else K - 1
    Bstar = Bstar[: valid + 1]
    h = np.concatenate([[0.0], Bstar[1:] + 1.0])
    violations = [int(k) for k in range(1, len(Bstar)) if not (k - 1 <= Bstar[k])]
    strict = bool(np.all(np.diff(h) > 0))

    def level(k):
        y = (Bstar[k] if starred else B[k]) + 1.0
        return _ginv(h, y) + 1.0

    n_max = n_levels
    while True:
        try:
            A = [level(k) for k in range(1, n_max + 1)]
            break
        except (GFunctionError, IndexError):
            n_max -= 1
            if n_max < 2:
                raise GFunctionError("not enough resolved levels to build G")
    if starred:
        A = [_ginv(h, 0.0) + 1.0] + A
    else:
        A = [A[0]] + A
    A = np.array(A)
    ratios = A[1:] / A[:-1]
    lam2 = float(max(A[0], ratios.max()))
    lam1 = 2.0 * lam2
    trace = {"r": r[: n_max + 2].tolist(), "B": B[: n_max + 2].tolist(), "B_star": Bstar[: n_max + 2].tolist(),
             "h": h[: n_max + 2].tolist(), "sup_ratio": float(ratios.max()), "starred": starred,
             "h_strict": strict, "bstar_violations": violations[:20], "unresolved_from": unresolved_from}
    gf = GFunction(A, lam1, lam2, lam1, trace)
    gf.trace["integral"] = integral_G(gf, law)
    _assert_invariants(gf)
    return gf


def integral_G(G: GFunction, gamma) -> float:
    law = energy_law(gamma)
    if isinstance(law, ScaledChi2):
        return law.integrate(G, breaks=G.knots)
    return law.integrate(G)


def _assert_invariants(G: GFunction):
    A = G.A
    if not (A[0] == A[1] or G.trace.get("starred")):
        raise GFunctionError("A_0 must equal A_1")
    if (A < 1).any() or (np.diff(A) < -1e-12).any():
        raise GFunctionError("A must be nondecreasing and at least 1")
    if not G.lambda2 >= max(A[0], (A[1:] / A[:-1]).max()) - 1e-12:
        raise GFunctionError("lambda2 below the observed ratio")


def constants(G: GFunction, m2: float, int_G: float | None = None) -> tuple[int, float, float]:
    """(m, C1, C) for the moment bounds."""
    int_G = G.trace.get("integral") if int_G is None else int_G
    lam1, lam3 = G.lambda1, G.lambda3
    m = int(math.floor(math.log2(lam1 + 1.0))) + 1
    p = 2**m
    if not p - lam1 - 1 > 0:
        raise GFunctionError("exponent choice failed: 2^m <= lambda1 + 1")
    G1 = float(G(1.0))
    C1 = lam3 ** (2 * m) * int_G + 2.0 * math.exp(p) * G1 * (1.0 + lam1 * (p * m2) ** p / (p - lam1 - 1.0))
    return m, C1, 3.0 * lam3**2 * C1


# ---------------------------------------------------------------------------
# property checks


def _off_delta(rng, n, lo=-6.0, hi=30.0):
    x = 2.0 ** rng.uniform(lo, hi, n)
    return x[np.abs(np.log2(x) - np.round(np.log2(x))) > 1e-9]


def check_properties(G: GFunction, rng, n: int = 1000) -> dict:
    """Pass flags for the structural properties of G at random points."""
    hi = math.log2(G.x_max) - 2
    x = _off_delta(rng, n, hi=hi)
    Gx, gx = G(x), G.g(x)
    res = {}
    y = np.sort(np.concatenate([[0.0], 2.0 ** rng.uniform(-6, hi, n)]))
    Gy = G(y)
    res["ii"] = bool(Gy[0] == 0.0 and np.all(np.diff(Gy)[np.diff(y) > 0] > 0))
    res["iii"] = bool(G.frak(G.x_max / 4) > 10 * G.frak(2.0))
    res["v"] = bool(np.all(Gx <= x * gx * (1 + 1e-12)) and np.all(x * gx <= G.lambda1 * Gx * (1 + 1e-12)))
    x2 = x[x < G.x_max / 4]
    res["vi"] = bool(np.all(G.g(2 * x2) <= G.lambda2 * G.g(x2) * (1 + 1e-12)))
    res["i'"] = bool(np.all(G(2 * x2) <= G.lambda3 * G(x2) * (1 + 1e-12)))
    fr = G.frak(y)
    res["ii'"] = bool(np.all(np.diff(fr) >= -1e-12 * fr[1:]))
    x1 = x[x >= 1.0]
    res["iii'"] = bool(np.all(G(x1) <= G(1.0) * x1**G.lambda1 * (1 + 1e-12)))
    ok = True
    for m in range(1, 5):
        xs = 2.0 ** rng.uniform(-6, hi - m - 1, (n // 4, 2**m))
        ok &= bool(np.all(G(xs.sum(1)) <= G.lambda3**m * G(xs).sum(1) * (1 + 1e-12)))
    res["iv'"] = ok
    qs = G.q(np.sort(np.sqrt(y)))
    res["q_monotone"] = bool(np.all(np.diff(qs) >= -1e-12 * np.abs(qs[1:])))
    return res


def check_uniform_integrability(trajectory, G: GFunction, C: float, radii=(1.0, 2.0, 4.0, 8.0), k: float = 4.0):
    """Rows for int |v|^2 q(|v|) dmu_t <= C and sup_t tail(R) <= C / q(R)."""
    from .ensemble import tail_energy, tail_energy_se

    rows = []
    for t, e in trajectory:
        sp = np.linalg.norm(e.points, axis=1)
        f = sp**2 * G.q(sp)
        val = float(e.weights @ f)
        se = float(np.sqrt(e.weights @ (f - val) ** 2 / max(len(f) - 1, 1))) if len(f) > 1 else 0.0
        rows.append({"kind": "moment", "t": t, "value": val, "se": se, "bound": C, "pass": val <= C + k * se})
    prev = math.inf
    for R in radii:
        vals = [(tail_energy(e, R), tail_energy_se(e, R)) for _, e in trajectory]
        sup, sup_se = max(vals, key=lambda p: p[0])
        bound = C / G.q(R)
        rows.append({"kind": "tail", "R": R, "value": sup, "se": sup_se, "bound": bound,
                     "pass": sup <= bound + k * sup_se and sup <= prev + k * sup_se})
        prev = sup
    return rows
