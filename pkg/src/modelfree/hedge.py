"""Model-free price bounds from semi-static super- and sub-hedging LPs.

A strategy holds cash ``a``, long/short positions in the quoted calls and
puts, and a static position ``delta0`` in each underlying bought at spot with
proportional transaction cost ``kappa``.  The replication constraint is
imposed on a product grid of ``[0, cap]^d`` that contains every strike and the
payoff's kink on each axis.

The upper bound is the cheapest super-replicating strategy (longs paid at the
ask, shorts received at the bid).  The lower bound is the largest amount that
can be raised by *selling* a sub-replicating strategy, i.e.
``lower(phi) = -upper(-phi)``: longs are valued at the bid, shorts at the ask
and the transaction cost makes the sub-hedge payoff larger.  Both sides are a
single LP each.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import lp as lpe
from .core import CALL, PUT, MarketSnapshot, PayoffSpec, evaluate_payoff, validate_snapshot

MAX_ASSETS = 3


@dataclass(frozen=True)
class PricerConfig:
    kappa: float = 0.0
    cap: Optional[float] = None  # B; defaults to twice the largest spot or strike
    budget: float = 100.0
    grid_per_axis: Optional[int] = None

    def resolve(self, snapshot: MarketSnapshot) -> "PricerConfig":
        cap = self.cap
        levels = list(snapshot.spots) + snapshot.strikes()
        if cap is None:
            cap = 2.0 * max(levels) if levels and max(levels) > 0 else 1.0
        grid = self.grid_per_axis
        if grid is None:
            grid = 64 if snapshot.d <= 2 else 16
        out = replace(self, cap=float(cap), grid_per_axis=int(grid))
        out.check(snapshot)
        return out

    def check(self, snapshot: Optional[MarketSnapshot] = None) -> None:
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not (0 < self.budget < np.inf):
            raise ValueError("budget must be finite and positive")
        if self.grid_per_axis is not None and self.grid_per_axis < 2:
            raise ValueError("grid_per_axis must be at least 2")
        if self.cap is not None:
            if not (0 < self.cap < np.inf):
                raise ValueError("cap must be finite and positive")
            if snapshot is not None:
                top = max(list(snapshot.spots) + snapshot.strikes())
                if top >= self.cap:
                    raise ValueError(f"cap {self.cap:g} must exceed every spot and strike (max {top:g})")


@dataclass
class HedgeStrategy:
    """Positions in canonical instrument order (see ``MarketSnapshot.instruments``)."""

    a: float
    c_plus: np.ndarray
    c_minus: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    delta0: np.ndarray

    def __post_init__(self):
        self.a = float(self.a)
        for name in ("c_plus", "c_minus", "p_plus", "p_minus", "delta0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.c_plus.shape != self.c_minus.shape or self.p_plus.shape != self.p_minus.shape:
            raise ValueError("long and short position arrays must have equal shapes")

    @classmethod
    def zeros(cls, snapshot: MarketSnapshot) -> "HedgeStrategy":
        nc, npt = sum(snapshot.n_calls()), sum(snapshot.n_puts())
        return cls(0.0, np.zeros(nc), np.zeros(nc), np.zeros(npt), np.zeros(npt), np.zeros(snapshot.d))

    def net(self) -> "HedgeStrategy":
        """Equivalent strategy that never holds both sides of one instrument."""
        c = self.c_plus - self.c_minus
        p = self.p_plus - self.p_minus
        return HedgeStrategy(self.a, np.maximum(c, 0), np.maximum(-c, 0),
                             np.maximum(p, 0), np.maximum(-p, 0), self.delta0.copy())

    def flipped(self) -> "HedgeStrategy":
        """The opposite position: cash and delta negated, longs and shorts swapped."""
        return HedgeStrategy(-self.a, self.c_minus.copy(), self.c_plus.copy(),
                             self.p_minus.copy(), self.p_plus.copy(), -self.delta0)

    def label(self) -> np.ndarray:
        """Flat ``(a, net option positions, delta0)`` used as a learning target."""
        return np.concatenate([[self.a], self.c_plus - self.c_minus, self.p_plus - self.p_minus, self.delta0])

    @classmethod
    def from_label(cls, label, n_calls: int, n_puts: int) -> "HedgeStrategy":
        label = np.asarray(label, dtype=float)
        if label.size <= 1 + n_calls + n_puts:
            raise ValueError("label too short for the given instrument counts")
        c = label[1:1 + n_calls]
        p = label[1 + n_calls:1 + n_calls + n_puts]
        delta = label[1 + n_calls + n_puts:]
        return cls(label[0], np.maximum(c, 0), np.maximum(-c, 0), np.maximum(p, 0), np.maximum(-p, 0), delta)

    def to_dict(self) -> dict:
        return {"a": self.a, "c_plus": self.c_plus.tolist(), "c_minus": self.c_minus.tolist(),
                "p_plus": self.p_plus.tolist(), "p_minus": self.p_minus.tolist(),
                "delta0": self.delta0.tolist()}


def _instrument_arrays(snapshot: MarketSnapshot, kind: str):
    asset, strike, bid, ask = [], [], [], []
    for k in range(snapshot.d):
        for q in snapshot.quotes(k, kind):
            asset.append(k)
            strike.append(q.strike)
            bid.append(q.bid)
            ask.append(q.ask)
    return (np.array(asset, dtype=int), np.array(strike, dtype=float),
            np.array(bid, dtype=float), np.array(ask, dtype=float))


def _check_shapes(strategy: HedgeStrategy, snapshot: MarketSnapshot) -> None:
    nc, npt = sum(snapshot.n_calls()), sum(snapshot.n_puts())
    if strategy.c_plus.size != nc or strategy.p_plus.size != npt or strategy.delta0.size != snapshot.d:
        raise ValueError(
            f"strategy shape ({strategy.c_plus.size} calls, {strategy.p_plus.size} puts, "
            f"{strategy.delta0.size} deltas) does not match snapshot ({nc}, {npt}, {snapshot.d})")


def evaluate_strategy(strategy: HedgeStrategy, snapshot: MarketSnapshot, s, kappa: float = 0.0,
                      sub: bool = False):
    """Terminal value of the strategy at price point(s) ``s``.

    With ``sub=True`` the transaction cost enters with a plus sign: that is the
    payoff a seller of the strategy must deliver net of their own costs, which
    is what the sub-hedging constraint compares with the derivative.
    """
    _check_shapes(strategy, snapshot)
    s = np.asarray(s, dtype=float)
    pts = np.atleast_2d(s)
    if pts.shape[1] != snapshot.d:
        raise ValueError(f"point has {pts.shape[1]} coordinates, snapshot has {snapshot.d} assets")
    ca, ck, _, _ = _instrument_arrays(snapshot, CALL)
    pa, pk, _, _ = _instrument_arrays(snapshot, PUT)
    val = np.full(pts.shape[0], strategy.a)
    if ca.size:
        val += np.maximum(pts[:, ca] - ck, 0.0) @ (strategy.c_plus - strategy.c_minus)
    if pa.size:
        val += np.maximum(pk - pts[:, pa], 0.0) @ (strategy.p_plus - strategy.p_minus)
    s0 = np.asarray(snapshot.spots)
    val += (pts - s0) @ strategy.delta0
    tc = kappa * float(np.dot(s0, np.abs(strategy.delta0)))
    val += tc if sub else -tc
    return val[0] if s.ndim == 1 else val


def strategy_cost(strategy: HedgeStrategy, snapshot: MarketSnapshot, sub: bool = False) -> float:
    """Set-up cost (longs at ask, shorts at bid).

    ``sub=True`` gives instead the proceeds of selling the strategy (longs at
    bid, shorts at ask), the quantity maximised by the lower bound.
    """
    _check_shapes(strategy, snapshot)
    _, _, cb, ca = _instrument_arrays(snapshot, CALL)
    _, _, pb, pa = _instrument_arrays(snapshot, PUT)
    if sub:
        ca, cb, pa, pb = cb, ca, pb, pa
    return float(strategy.a + strategy.c_plus @ ca - strategy.c_minus @ cb
                 + strategy.p_plus @ pa - strategy.p_minus @ pb)


def position_size(strategy: HedgeStrategy) -> float:
    return float(strategy.c_plus.sum() + strategy.c_minus.sum() + strategy.p_plus.sum()
                 + strategy.p_minus.sum() + np.abs(strategy.delta0).sum())


@dataclass
class Grid:
    axes: List[np.ndarray]

    @property
    def shape(self):
        return tuple(len(ax) for ax in self.axes)

    def __len__(self):
        return int(np.prod(self.shape))

    def __iter__(self):
        return (np.array(p) for p in itertools.product(*self.axes))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def _dedup(values, tol=1e-12) -> np.ndarray:
    vals = np.sort(np.asarray(values, dtype=float))
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > tol:
            out.append(v)
    return np.array(out)


def build_grid(snapshot: MarketSnapshot, spec: PayoffSpec, config: PricerConfig) -> Grid:
    cfg = config if config.cap is not None and config.grid_per_axis is not None else config.resolve(snapshot)
    G, cap = cfg.grid_per_axis, cfg.cap
    if G < 2:
        raise ValueError("grid_per_axis must be at least 2")
    kinks = spec.kinks(snapshot.d, cap)
    axes = []
    for k in range(snapshot.d):
        pts = list(np.arange(G) * cap / (G - 1))
        pts[-1] = cap
        pts += [q.strike for q in snapshot.chains[k] if q.strike <= cap]
        pts += kinks[k]
        axes.append(_dedup(pts))
    return Grid(axes)


@dataclass
class BoundResult:
    lower: float
    upper: float
    lower_strategy: Optional[HedgeStrategy]
    upper_strategy: Optional[HedgeStrategy]
    lower_status: str = "optimal"
    upper_status: str = "optimal"
    grid_size: int = 0

    @property
    def optimal(self) -> bool:
        return self.lower_status == "optimal" and self.upper_status == "optimal"


def _superhedge(snapshot: MarketSnapshot, points: np.ndarray, phi: np.ndarray, kappa: float,
                budget: float, method: str = "auto", dump_tableau: Optional[str] = None):
    """Cheapest strategy dominating ``phi`` at every grid point."""
    ca, ck, cb, cask = _instrument_arrays(snapshot, CALL)
    pa, pk, pb, pask = _instrument_arrays(snapshot, PUT)
    nc, npt, d = ca.size, pa.size, snapshot.d
    s0 = np.asarray(snapshot.spots)
    n = len(points)
    gc = np.maximum(points[:, ca] - ck, 0.0) if nc else np.zeros((n, 0))
    gp = np.maximum(pk - points[:, pa], 0.0) if npt else np.zeros((n, 0))
    fwd = points - s0
    tc = kappa * s0
    A = np.hstack([np.ones((n, 1)), gc, -gc, gp, -gp, fwd - tc, -fwd - tc])
    nvar = A.shape[1]
    budget_row = np.ones(nvar)
    budget_row[0] = 0.0
    A = np.vstack([A, budget_row])
    rel = [lpe.Rel.GE] * n + [lpe.Rel.LE]
    b = np.append(phi, budget)
    c = np.concatenate([[1.0], cask, -cb, pask, -pb, np.zeros(2 * d)])
    bounds = [lpe.Bound.FREE] + [lpe.Bound.NONNEG] * (nvar - 1)
    prob = lpe.LpProblem(lpe.Sense.MIN, c, A, rel, b, bounds)
    sol = lpe.solve(prob, method=method, dump_tableau=dump_tableau)
    if not sol.optimal:
        return sol.status.value, float("nan"), None
    x = sol.x
    i = 1
    cp, cm = x[i:i + nc], x[i + nc:i + 2 * nc]
    i += 2 * nc
    pp, pm = x[i:i + npt], x[i + npt:i + 2 * npt]
    i += 2 * npt
    delta = x[i:i + d] - x[i + d:i + 2 * d]
    strat = HedgeStrategy(x[0], np.maximum(cp, 0), np.maximum(cm, 0), np.maximum(pp, 0),
                          np.maximum(pm, 0), delta).net()
    return "optimal", sol.value, strat


def bounds_for_values(snapshot: MarketSnapshot, grid: Grid, phi: np.ndarray, config: PricerConfig,
                      method: str = "auto", dump_tableau: Optional[str] = None) -> BoundResult:
    """Price bounds for a payoff given by its values on ``grid.points()``."""
    pts = grid.points()
    phi = np.asarray(phi, dtype=float)
    up_status, upper, up_strat = _superhedge(snapshot, pts, phi, config.kappa, config.budget, method,
                                             dump_tableau)
    lo_status, neg_lower, sub = _superhedge(snapshot, pts, -phi, config.kappa, config.budget, method)
    lo_strat = sub.flipped() if sub is not None else None
    return BoundResult(-neg_lower, upper, lo_strat, up_strat, lo_status, up_status, len(pts))


def price_bounds(snapshot: MarketSnapshot, spec: PayoffSpec, config: PricerConfig = PricerConfig(),
                 method: str = "auto", dump_tableau: Optional[str] = None) -> BoundResult:
    problems = validate_snapshot(snapshot)
    if problems:
        raise ValueError("invalid snapshot: " + "; ".join(problems))
    if snapshot.d > MAX_ASSETS:
        raise ValueError(f"grid pricing supports at most {MAX_ASSETS} assets, got {snapshot.d}")
    spec.check(snapshot.d)
    cfg = config.resolve(snapshot)
    grid = build_grid(snapshot, spec, cfg)
    phi = evaluate_payoff(spec, grid.points())
    return bounds_for_values(snapshot, grid, phi, cfg, method, dump_tableau)


@dataclass
class ArbitrageReport:
    arbitrage_free: bool
    upper: float
    lower: float
    strategy: Optional[HedgeStrategy] = None
    message: str = ""
    details: dict = field(default_factory=dict)


def check_no_arbitrage(snapshot: MarketSnapshot, config: PricerConfig = PricerConfig(),
                       tol: float = 1e-7) -> ArbitrageReport:
    """Price the zero payoff; any nonzero bound exhibits a model-free arbitrage.

    A negative super-hedge cost is a strategy that pays now and never loses;
    a positive sub-hedge value is one that can be sold for a positive amount
    while its liability never exceeds zero.
    """
    zero = PayoffSpec.basket([0.0] * snapshot.d, 0.0)
    res = price_bounds(snapshot, zero, config)
    if res.upper < -tol:
        return ArbitrageReport(False, res.upper, res.lower, res.upper_strategy,
                               f"buying this strategy earns {-res.upper:.6g} now and never loses")
    if res.lower > tol:
        return ArbitrageReport(False, res.upper, res.lower, res.lower_strategy,
                               f"selling this strategy earns {res.lower:.6g} now and never loses")
    return ArbitrageReport(True, res.upper, res.lower, None, "no model-free arbitrage found")
