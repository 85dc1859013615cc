"""One-dimensional marginals, U-quantization and two-marginal martingale transport.

Every continuous family exposes ``quantile(u)`` and the integrated quantile
``G(u) = int_0^u F^{-1}(v) dv`` in closed form, so the U-quantization atoms
``N * (G(i/N) - G((i-1)/N))`` are exact up to rounding and the mean of the
quantized measure equals the mean of the law.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from . import lp as lpe

MERGE_TOL = 1e-12


class MotInfeasible(ValueError):
    """Raised when no martingale coupling exists; ``witness`` says why if known."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# --------------------------------------------------------------------------
# distributions


class Distribution:
    def quantile(self, u):
        raise NotImplementedError

    def integrated_quantile(self, u):
        raise NotImplementedError

    def mean(self) -> float:
        return float(self.integrated_quantile(1.0))

    def point_masses(self) -> np.ndarray:
        """Atoms of the law, if it has any."""
        return np.empty(0)


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile level must lie strictly between 0 and 1")
    return u


@dataclass(frozen=True)
class LogNormal(Distribution):
    """Law of ``exp(Z)`` with ``Z ~ N(mu, sigma^2)``; ``sigma`` is the standard deviation."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")

    def quantile(self, u):
        return np.exp(self.mu + self.sigma * ndtri(_check_u(u)))

    def integrated_quantile(self, u):
        # int_0^u exp(mu + s z(v)) dv = E[X] * Phi(z(u) - s)
        u = np.asarray(u, dtype=float)
        z = ndtri(np.clip(u, 0.0, 1.0))
        return np.exp(self.mu + 0.5 * self.sigma ** 2) * ndtr(z - self.sigma)

    def upper_tail(self, u):
        """``mean - G(u)`` without cancellation for ``u`` near one."""
        z = ndtri(np.clip(np.asarray(u, dtype=float), 0.0, 1.0))
        return np.exp(self.mu + 0.5 * self.sigma ** 2) * ndtr(self.sigma - z)

    def mean(self) -> float:
        return float(np.exp(self.mu + 0.5 * self.sigma ** 2))

    def point_masses(self) -> np.ndarray:
        return np.array([np.exp(self.mu)]) if self.sigma == 0 else np.empty(0)


@dataclass(frozen=True)
class Trapezoidal(Distribution):
    """Density rising linearly on [a, b], flat on [b, c], falling on [c, d]."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c <= self.d):
            raise ValueError("need a <= b <= c <= d")
        if self.a < 0:
            raise ValueError("support must lie in [0, inf)")

    @property
    def _h(self):
        span = (self.d - self.a) + (self.c - self.b)
        return 2.0 / span if span > 0 else np.inf

    def _breaks(self):
        if self.d == self.a:
            return 0.0, 1.0
        h = self._h
        return 0.5 * h * (self.b - self.a), 1.0 - 0.5 * h * (self.d - self.c)

    def quantile(self, u):
        u = _check_u(u)
        return self._q(u)

    def _q(self, u):
        if self.d == self.a:
            return np.full_like(u, self.a)
        h = self._h
        p1, p2 = self._breaks()
        rise = self.a + np.sqrt(np.maximum(2.0 * u * (self.b - self.a) / h, 0.0))
        flat = self.b + (u - p1) / h if np.isfinite(h) else np.full_like(u, self.b)
        fall = self.d - np.sqrt(np.maximum(2.0 * (1.0 - u) * (self.d - self.c) / h, 0.0))
        return np.where(u <= p1, rise, np.where(u <= p2, flat, fall))

    def integrated_quantile(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.d == self.a:
            return self.a * u
        h = self._h
        p1, p2 = self._breaks()

        def g_rise(v):
            return self.a * v + (2.0 / 3.0) * np.sqrt(2.0 * (self.b - self.a) / h) * v ** 1.5

        def g_flat(v):
            return self.b * (v - p1) + 0.5 * ((v - p1) ** 2 - 0.0) / h

        def g_fall(v):
            w = 1.0 - v
            w2 = 1.0 - p2
            k = np.sqrt(2.0 * (self.d - self.c) / h)
            # int_{p2}^{v} d - k sqrt(1 - t) dt
            return self.d * (v - p2) + (2.0 / 3.0) * k * (w ** 1.5 - w2 ** 1.5)

        v1 = np.minimum(u, p1)
        out = g_rise(v1)
        v2 = np.clip(u, p1, p2)
        out = out + np.where(u > p1, g_flat(v2), 0.0)
        v3 = np.clip(u, p2, 1.0)
        out = out + np.where(u > p2, g_fall(v3), 0.0)
        return out

    def mean(self) -> float:
        if self.d == self.a:
            return float(self.a)
        return float(self.integrated_quantile(1.0))

    def point_masses(self) -> np.ndarray:
        return np.array([self.a]) if self.d == self.a else np.empty(0)


def Uniform(a: float, b: float) -> Trapezoidal:
    if not a <= b:
        raise ValueError("uniform needs a <= b")
    return Trapezoidal(a, a, b, b)


def Triangular(low: float, mode: float, high: float) -> Trapezoidal:
    return Trapezoidal(low, mode, mode, high)


@dataclass(frozen=True)
class Empirical(Distribution):
    atoms: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if atoms.size == 0 or atoms.shape != weights.shape:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive total")
        if np.any(atoms < 0):
            raise ValueError("atoms must be nonnegative")
        order = np.argsort(atoms, kind="stable")
        object.__setattr__(self, "atoms", tuple(atoms[order]))
        object.__setattr__(self, "weights", tuple(weights[order] / weights.sum()))

    def _cum(self):
        return np.cumsum(self.weights)

    def quantile(self, u):
        u = _check_u(u)
        cum = self._cum()
        idx = np.searchsorted(cum, u - 1e-15, side="left")
        return np.asarray(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]

    def integrated_quantile(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        cum = self._cum()
        lo = np.concatenate([[0.0], cum[:-1]])
        x = np.asarray(self.atoms)
        overlap = np.clip(u[..., None] - lo, 0.0, None)
        overlap = np.minimum(overlap, np.asarray(self.weights))
        return overlap @ x

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.weights))

    def point_masses(self) -> np.ndarray:
        return np.asarray(self.atoms)


def DiscreteUniform(points: Sequence[float]) -> Empirical:
    pts = list(points)
    return Empirical(tuple(pts), tuple([1.0] * len(pts)))


def quantile(dist: Distribution, u):
    """Left-continuous generalised inverse of the CDF at level ``u`` in (0, 1)."""
    return dist.quantile(u)


# --------------------------------------------------------------------------
# discrete measures


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.size == 0 or atoms.shape != weights.shape:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        if np.any(atoms < 0) or not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite and nonnegative")
        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        keep_a, keep_w = [atoms[0]], [weights[0]]
        for x, w in zip(atoms[1:], weights[1:]):
            if x - keep_a[-1] <= MERGE_TOL:
                keep_w[-1] += w
            else:
                keep_a.append(x)
                keep_w.append(w)
        object.__setattr__(self, "atoms", np.array(keep_a))
        object.__setattr__(self, "weights", np.array(keep_w))

    @classmethod
    def from_atoms(cls, atoms, weights=None) -> "DiscreteMeasure":
        atoms = np.asarray(atoms, dtype=float)
        if weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        weights = np.asarray(weights, dtype=float)
        return cls(atoms, weights / weights.sum())

    def __len__(self):
        return self.atoms.size

    def mean(self) -> float:
        return float(self.atoms @ self.weights)

    def call_values(self, strikes) -> np.ndarray:
        strikes = np.asarray(strikes, dtype=float)
        return np.maximum(self.atoms[None, :] - strikes[:, None], 0.0) @ self.weights

    def quantile(self, u):
        u = _check_u(u)
        idx = np.searchsorted(np.cumsum(self.weights), u - 1e-15, side="left")
        return self.atoms[np.minimum(idx, self.atoms.size - 1)]


def u_quantize_atoms(dist: Distribution, N: int) -> np.ndarray:
    """The N cell averages of the quantile, ascending and with repeats kept."""
    if N < 1:
        raise ValueError("N must be at least 1")
    grid = np.arange(N + 1) / N
    G = dist.integrated_quantile(grid)
    atoms = N * np.diff(G)
    if isinstance(dist, LogNormal):
        # upper cells from the complementary tail to avoid cancellation near 1
        T = dist.upper_tail(grid)
        upper = N * (T[:-1] - T[1:])
        half = grid[:-1] >= 0.5
        atoms = np.where(half, upper, atoms)
    atoms = np.maximum.accumulate(np.maximum(atoms, 0.0))
    # a cell inside a single atom's mass averages to that atom exactly
    for x in dist.point_masses():
        atoms[np.abs(atoms - x) <= 1e-12 * max(1.0, abs(x))] = x
    return atoms


def u_quantize(dist: Distribution, N: int) -> DiscreteMeasure:
    """N equally weighted atoms, each the average of the quantile over one cell."""
    atoms = u_quantize_atoms(dist, N)
    # merge here so repeated atoms get weight count / N rather than a float sum
    starts = np.concatenate([[True], np.diff(atoms) > MERGE_TOL])
    idx = np.flatnonzero(starts)
    counts = np.diff(np.append(idx, N))
    return DiscreteMeasure(atoms[idx], counts / N)


def wasserstein1(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Exact W1 as the L1 distance between the two step quantile functions."""
    c1, c2 = np.cumsum(m1.weights), np.cumsum(m2.weights)
    c1[-1] = c2[-1] = 1.0
    brk = np.unique(np.concatenate([[0.0], c1, c2]))
    brk = brk[(brk >= 0) & (brk <= 1)]
    lo, hi = brk[:-1], brk[1:]
    mid = 0.5 * (lo + hi)
    i1 = np.minimum(np.searchsorted(c1, mid), len(m1) - 1)
    i2 = np.minimum(np.searchsorted(c2, mid), len(m2) - 1)
    return float(np.sum((hi - lo) * np.abs(m1.atoms[i1] - m2.atoms[i2])))


def convex_order_witness(m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = 1e-9):
    """None if ``m1`` precedes ``m2`` in convex order, else a short reason."""
    if abs(m1.mean() - m2.mean()) > tol:
        return {"rule": "mean", "mean1": m1.mean(), "mean2": m2.mean()}
    strikes = np.union1d(m1.atoms, m2.atoms)
    gap = m1.call_values(strikes) - m2.call_values(strikes)
    k = int(np.argmax(gap))
    if gap[k] > tol:
        return {"rule": "call", "strike": float(strikes[k]), "excess": float(gap[k])}
    return None


def check_convex_order(m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = 1e-9) -> bool:
    return convex_order_witness(m1, m2, tol) is None


# --------------------------------------------------------------------------
# payoffs and the MOT linear programme


@dataclass(frozen=True)
class MotPayoff:
    """``abs_diff`` = |y - x|, ``call2`` = (y - K)+, ``put2`` = (K - y)+, ``spread_call`` = (y - x - K)+."""

    kind: str = "abs_diff"
    strike: float = 0.0

    KINDS = ("abs_diff", "call2", "put2", "spread_call")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown MOT payoff {self.kind!r}; choose from {self.KINDS}")

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.kind == "abs_diff":
            return np.abs(y - x)
        if self.kind == "call2":
            return np.maximum(y - self.strike, 0.0) + 0.0 * x
        if self.kind == "put2":
            return np.maximum(self.strike - y, 0.0) + 0.0 * x
        return np.maximum(y - x - self.strike, 0.0)


@dataclass(frozen=True)
class MotConstraints:
    variance: Optional[float] = None  # prescribed Var(S2 / S1)


def _coupling_rows(m1: DiscreteMeasure, m2: DiscreteMeasure, constraints: MotConstraints):
    x, y = m1.atoms, m2.atoms
    n, m = x.size, y.size
    rows = []
    b = []
    for l in range(n):
        r = np.zeros((n, m))
        r[l] = 1.0
        rows.append(r.ravel())
        b.append(m1.weights[l])
    for j in range(m):
        r = np.zeros((n, m))
        r[:, j] = 1.0
        rows.append(r.ravel())
        b.append(m2.weights[j])
    for l in range(n):
        r = np.zeros((n, m))
        diff = y - x[l]
        # atoms equal up to rounding would otherwise be blown up by row scaling
        diff[np.abs(diff) <= MERGE_TOL * max(1.0, abs(x[l]))] = 0.0
        r[l] = diff
        rows.append(r.ravel())
        b.append(0.0)
    if constraints.variance is not None:
        if np.any(x <= 0):
            raise ValueError("a variance constraint needs strictly positive first-marginal atoms")
        if constraints.variance < 0:
            raise ValueError("variance must be nonnegative")
        rows.append(((y[None, :] / x[:, None]) ** 2).ravel())
        b.append(constraints.variance + 1.0)
    return np.array(rows), np.array(b)


def mot_lp(m1: DiscreteMeasure, m2: DiscreteMeasure, objective: np.ndarray, sense: str,
           constraints: MotConstraints = MotConstraints()) -> lpe.LpProblem:
    """LP over couplings ``q[l, m]`` (flattened row-major) of ``m1`` and ``m2``."""
    A, b = _coupling_rows(m1, m2, constraints)
    return lpe.LpProblem(sense, np.asarray(objective, dtype=float).ravel(), A, [lpe.Rel.EQ] * len(b), b)


def mot_bounds(m1: DiscreteMeasure, m2: DiscreteMeasure, payoff: MotPayoff = MotPayoff(),
               constraints: MotConstraints = MotConstraints(), return_couplings: bool = False,
               dump_tableau: Optional[str] = None):
    """(inf, sup) of E[payoff(S1, S2)] over martingale couplings of ``m1`` and ``m2``."""
    phi = payoff(m1.atoms[:, None], m2.atoms[None, :])
    out = []
    plans = []
    for sense in ("min", "max"):
        prob = mot_lp(m1, m2, phi, sense, constraints)
        sol = lpe.solve(prob, method="primal", dump_tableau=dump_tableau if sense == "max" else None)
        if sol.status is not lpe.Status.OPTIMAL:
            witness = convex_order_witness(m1, m2)
            if witness is not None:
                msg = f"marginals are not in convex order ({witness['rule']} test fails)"
            elif constraints.variance is not None:
                msg = "variance level is not attainable by any martingale coupling"
            else:
                msg = f"MOT linear programme is {sol.status.value}"
            raise MotInfeasible(msg, witness)
        out.append(sol.value)
        plans.append(sol.x.reshape(len(m1), len(m2)))
    if return_couplings:
        return out[0], out[1], plans[0], plans[1]
    return out[0], out[1]


def second_moment_range(m1: DiscreteMeasure, m2: DiscreteMeasure) -> Tuple[float, float]:
    """Smallest and largest E[(S2/S1)^2] over martingale couplings."""
    if np.any(m1.atoms <= 0):
        raise ValueError("first-marginal atoms must be strictly positive")
    ratio2 = (m2.atoms[None, :] / m1.atoms[:, None]) ** 2
    vals = []
    for sense in ("min", "max"):
        sol = lpe.solve(mot_lp(m1, m2, ratio2, sense), method="primal")
        if not sol.optimal:
            raise MotInfeasible("marginals admit no martingale coupling", convex_order_witness(m1, m2))
        vals.append(sol.value)
    return vals[0], vals[1]


# --------------------------------------------------------------------------
# measure files


def save_measure(m: DiscreteMeasure, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, p in zip(m.atoms, m.weights):
            w.writerow([format(x, ".17g"), format(p, ".17g")])


def load_measure(path: str) -> DiscreteMeasure:
    """CSV lines ``atom,weight``; without a weight column the atoms are equally weighted."""
    atoms, weights = [], []
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip()]
            if not row:
                continue
            try:
                atoms.append(float(row[0]))
                weights.append(float(row[1]) if len(row) > 1 else None)
            except ValueError:
                if not atoms:  # header line
                    continue
                raise
    if not atoms:
        raise ValueError(f"{path}: no atoms found")
    if all(w is None for w in weights):
        return DiscreteMeasure.from_atoms(atoms)
    if any(w is None for w in weights):
        raise ValueError(f"{path}: weight column present on some lines only")
    return DiscreteMeasure.from_atoms(atoms, weights)
