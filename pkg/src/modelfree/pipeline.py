"""Synthetic training data: marginal pairs with MOT bound labels, and option
snapshots with hedging bound (or hedging strategy) labels.

Each sample ``i`` draws from its own generator seeded with ``(seed, i)``, so a
dataset does not depend on the order in which samples are produced.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import (CALL, MarketSnapshot, OptionQuote, PayoffSpec, evaluate_payoff, feature_names, feature_vector,
                   snapshot_from_features)
from .hedge import HedgeStrategy, PricerConfig, bounds_for_values, build_grid, check_no_arbitrage, evaluate_strategy, strategy_cost
from .mot import (DiscreteMeasure, DiscreteUniform, LogNormal, MotConstraints, MotPayoff, Triangular, Uniform,
                  check_convex_order, mot_bounds, second_moment_range, u_quantize, u_quantize_atoms)

REPLICATION_TOL = 1e-7


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("features and targets must be 2-d with equal row counts")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains non-finite entries")
        fn, tn = self.meta.get("feature_names"), self.meta.get("target_names")
        if fn is not None and len(fn) != self.X.shape[1]:
            raise ValueError(f"{len(fn)} feature names for {self.X.shape[1]} feature columns")
        if tn is not None and len(tn) != self.Y.shape[1]:
            raise ValueError(f"{len(tn)} target names for {self.Y.shape[1]} target columns")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], dict(self.meta))

    def normalizers(self) -> np.ndarray:
        """Per-row scale for relative errors: spot, weighted spot sum, or 1."""
        m = self.meta
        if m.get("kind") != "hedge":
            return np.ones(len(self))
        names = m["feature_names"]
        d = len(m["n_calls"])
        spots = self.X[:, [names.index(f"spot_{k}") for k in range(d)]]
        if m["family"] == "call":
            return spots[:, 0]
        w = self.X[:, [names.index(f"theta_w{k}") for k in range(d)]]
        return np.sum(w * spots, axis=1)


def save_dataset(ds: Dataset, path: str) -> None:
    """CSV with a ``# {json meta}`` first line, a header, then features and targets per row."""
    meta = dict(ds.meta)
    fn = meta.get("feature_names") or [f"x{j}" for j in range(ds.X.shape[1])]
    tn = meta.get("target_names") or [f"y{j}" for j in range(ds.Y.shape[1])]
    meta["feature_names"], meta["target_names"] = fn, tn
    meta["n_features"], meta["n_targets"] = ds.X.shape[1], ds.Y.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fn + tn)
        for x, y in zip(ds.X, ds.Y):
            w.writerow([format(v, ".17g") for v in x] + [format(v, ".17g") for v in y])


def load_dataset(path: str) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# {{metadata}}' first line")
        try:
            meta = json.loads(first[1:])
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed metadata line: {exc}") from exc
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: missing header")
    header, body = rows[0], [r for r in rows[1:] if r]
    nf, nt = int(meta["n_features"]), int(meta["n_targets"])
    if len(header) != nf + nt:
        raise ValueError(f"{path}: header has {len(header)} columns, metadata says {nf + nt}")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), nf + nt)
    except ValueError as exc:
        raise ValueError(f"{path}: bad numeric row: {exc}") from exc
    return Dataset(data[:, :nf], data[:, nf:], meta)


def split_dataset(ds: Dataset, test_fraction: float, seed: int = 0) -> Tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ValueError("test fraction must lie in (0, 1)")
    n = len(ds)
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"cannot split {n} rows with test fraction {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


# --------------------------------------------------------------------------
# marginal pairs and MOT labels

FAMILIES = ("lognormal", "uniform", "uniform_two_point", "uniform_triangular")


def gen_marginal_pair(i: int, rng: np.random.Generator):
    """Two laws from family ``i mod 4``; the first is meant to precede the second in convex order."""
    fam = i % 4
    if fam == 0:
        mu = rng.uniform(-2, 2)
        s1 = rng.uniform(0, 0.5)
        s2 = s1 * rng.uniform(1, 2)
        return LogNormal(mu - s1 ** 2 / 2, s1), LogNormal(mu - s2 ** 2 / 2, s2)
    if fam == 1:
        mu = rng.uniform(10, 20)
        a = rng.uniform(0, 5)
        b = rng.uniform(a, a + 5)
        return Uniform(mu - a, mu + a), Uniform(mu - b, mu + b)
    if fam == 2:
        mu = rng.uniform(5, 10)
        a = rng.uniform(0, 5)
        return Uniform(mu - a, mu + a), DiscreteUniform([mu - a, mu + a])
    l = rng.uniform(0, 5)
    m = rng.uniform(l, l + 10)
    u = rng.uniform(m, m + 10)
    return Uniform(m - l / 2, m + l / 2), Triangular(l, m, u)


@dataclass
class MotGenConfig:
    samples: int
    N: int = 20
    seed: int = 0
    variance: bool = False
    families: Tuple[int, ...] = (0, 1, 2, 3)
    payoff: MotPayoff = MotPayoff()
    max_attempts: Optional[int] = None

    def __post_init__(self):
        if self.samples < 1 or self.N < 1:
            raise ValueError("samples and N must be >= 1")
        if not self.families or any(f not in range(4) for f in self.families):
            raise ValueError("families must be a nonempty subset of 0..3")


def mot_sample(config: MotGenConfig, index: int):
    """Features and targets for attempt ``index``, or None if the pair is rejected."""
    rng = sample_rng(config.seed, index)
    fam = config.families[index % len(config.families)]
    d1, d2 = gen_marginal_pair(fam, rng)
    x1, x2 = u_quantize_atoms(d1, config.N), u_quantize_atoms(d2, config.N)
    m1 = DiscreteMeasure(x1, np.full(config.N, 1.0 / config.N))
    m2 = DiscreteMeasure(x2, np.full(config.N, 1.0 / config.N))
    if not check_convex_order(m1, m2):
        return None
    feats = [x1, x2]
    cons = MotConstraints()
    if config.variance:
        if np.any(m1.atoms <= 0):
            return None
        lo, hi = second_moment_range(m1, m2)
        level = lo + rng.uniform() * (hi - lo)
        var = max(level - 1.0, 0.0)
        feats.append([np.sqrt(var)])
        cons = MotConstraints(variance=var)
    try:
        lower, upper = mot_bounds(m1, m2, config.payoff, cons)
    except ValueError as exc:
        raise RuntimeError(f"MOT labelling failed on an accepted pair (attempt {index}): {exc}") from exc
    return np.concatenate(feats), np.array([lower, upper]), fam


def gen_mot_dataset(config: MotGenConfig, progress=None) -> Dataset:
    limit = config.max_attempts or 50 * config.samples + 100
    X, Y, fams = [], [], []
    i = 0
    while len(X) < config.samples:
        if i >= limit:
            raise RuntimeError(f"only {len(X)} of {config.samples} pairs accepted after {limit} attempts")
        out = mot_sample(config, i)
        i += 1
        if out is None:
            continue
        X.append(out[0])
        Y.append(out[1])
        fams.append(out[2])
        if progress is not None:
            progress(len(X))
    N = config.N
    names = [f"mu1_x{j}" for j in range(N)] + [f"mu2_x{j}" for j in range(N)]
    if config.variance:
        names.append("sigma12")
    meta = {"kind": "mot", "N": N, "variance": config.variance, "seed": config.seed,
            "payoff": {"kind": config.payoff.kind, "strike": config.payoff.strike},
            "attempts": i, "family_counts": [fams.count(f) for f in range(4)],
            "feature_names": names, "target_names": ["lower", "upper"]}
    return Dataset(np.array(X), np.array(Y), meta)


# --------------------------------------------------------------------------
# option snapshots and hedging labels


def gen_market_snapshot(rng: np.random.Generator, d: int = 1, quotes_per_asset: int = 20,
                        spread: float = 0.005) -> MarketSnapshot:
    """Call quotes priced as expectations under a 10-atom law with mean equal to the spot."""
    if d < 1 or quotes_per_asset < 1:
        raise ValueError("need d >= 1 and at least one quote per asset")
    if not 0 <= spread < 1:
        raise ValueError("spread must lie in [0, 1)")
    spots, chains = [], []
    for _ in range(d):
        s0 = rng.uniform(20, 200)
        sigma = rng.uniform(0.1, 0.5)
        law = u_quantize(LogNormal(-sigma ** 2 / 2, sigma), 10)
        atoms = law.atoms * (s0 / law.mean())
        strikes = np.linspace(0.6, 1.4, quotes_per_asset) * s0
        mids = np.maximum(atoms[None, :] - strikes[:, None], 0.0) @ law.weights
        spots.append(s0)
        chains.append([OptionQuote(CALL, K, m * (1 - spread), m * (1 + spread)) for K, m in zip(strikes, mids)])
    return MarketSnapshot(spots, chains)


def draw_payoff(rng: np.random.Generator, snapshot: MarketSnapshot, family: str) -> PayoffSpec:
    s0 = np.asarray(snapshot.spots)
    if family == "call":
        return PayoffSpec.call(rng.uniform(0.5, 1.5) * s0[0], 0)
    if family == "basket":
        w = rng.uniform(0, 1, size=snapshot.d)
        return PayoffSpec.basket(w, rng.uniform(0.5, 1.5) * float(w @ s0))
    raise ValueError(f"unknown payoff family {family!r}")


@dataclass
class HedgeGenConfig:
    samples: int  # number of snapshots; each contributes n_subset rows
    d: int = 1
    quotes: int = 20
    family: str = "call"
    mode: str = "prices"
    n_subset: int = 5
    seed: int = 0
    spread: float = 0.005
    pricer: PricerConfig = PricerConfig()
    max_retries: int = 20

    def __post_init__(self):
        if self.samples < 1 or self.n_subset < 1:
            raise ValueError("samples and n_subset must be >= 1")
        if not 1 <= self.d <= 3:
            raise ValueError("hedge data supports 1 to 3 assets")
        if self.family not in ("call", "basket"):
            raise ValueError("family must be 'call' or 'basket'")
        if self.mode not in ("prices", "strategies"):
            raise ValueError("mode must be 'prices' or 'strategies'")


def hedge_sample(config: HedgeGenConfig, index: int):
    """Rows of features and targets contributed by snapshot ``index``."""
    rng = sample_rng(config.seed, index)
    for _ in range(config.max_retries):
        snap = gen_market_snapshot(rng, config.d, config.quotes, config.spread)
        if check_no_arbitrage(snap, config.pricer).arbitrage_free:
            break
    else:
        raise RuntimeError(f"snapshot {index}: no arbitrage-free draw in {config.max_retries} tries")
    cfg = config.pricer.resolve(snap)
    X, Y = [], []
    for _ in range(config.n_subset):
        spec = draw_payoff(rng, snap, config.family)
        grid = build_grid(snap, spec, cfg)
        pts = grid.points()
        phi = evaluate_payoff(spec, pts)
        res = bounds_for_values(snap, grid, phi, cfg)
        if not res.optimal:
            raise RuntimeError(f"snapshot {index}: hedging LP not optimal ({res.lower_status}/{res.upper_status})")
        X.append(feature_vector(snap, spec))
        if config.mode == "prices":
            Y.append([res.lower, res.upper])
            continue
        up, lo = res.upper_strategy, res.lower_strategy
        gap_up = np.min(evaluate_strategy(up, snap, pts, cfg.kappa) - phi)
        gap_lo = np.min(phi - evaluate_strategy(lo, snap, pts, cfg.kappa, sub=True))
        if gap_up < -REPLICATION_TOL or gap_lo < -REPLICATION_TOL:
            raise RuntimeError(f"snapshot {index}: labelled strategy violates its hedge by "
                               f"{-min(gap_up, gap_lo):.3g}")
        Y.append(np.concatenate([lo.label(), up.label()]))
    return X, Y, snap


def hedge_target_names(n_calls: int, n_puts: int, d: int, mode: str) -> List[str]:
    if mode == "prices":
        return ["lower", "upper"]
    names = []
    for side in ("lo", "up"):
        names.append(f"{side}_a")
        names += [f"{side}_call_{j}" for j in range(n_calls)]
        names += [f"{side}_put_{j}" for j in range(n_puts)]
        names += [f"{side}_delta_{k}" for k in range(d)]
    return names


def gen_hedge_dataset(config: HedgeGenConfig, progress=None) -> Dataset:
    X, Y = [], []
    snap = None
    for i in range(config.samples):
        xs, ys, snap = hedge_sample(config, i)
        X += xs
        Y += ys
        if progress is not None:
            progress(i + 1)
    n_calls, n_puts = snap.n_calls(), snap.n_puts()
    meta = {"kind": "hedge", "family": config.family, "mode": config.mode, "seed": config.seed,
            "n_calls": n_calls, "n_puts": n_puts, "n_subset": config.n_subset, "spread": config.spread,
            "pricer": {"kappa": config.pricer.kappa, "cap": config.pricer.cap, "budget": config.pricer.budget,
                       "grid_per_axis": config.pricer.grid_per_axis},
            "feature_names": feature_names(n_calls, n_puts, config.family),
            "target_names": hedge_target_names(sum(n_calls), sum(n_puts), config.d, config.mode)}
    return Dataset(np.array(X), np.array(Y), meta)


def strategy_prices(ds: Dataset, Y_strat: Optional[np.ndarray] = None) -> np.ndarray:
    """(lower, upper) implied by strategy labels (or predictions) through the cost functional."""
    m = ds.meta
    Y_strat = ds.Y if Y_strat is None else np.asarray(Y_strat, dtype=float)
    nc, npt = sum(m["n_calls"]), sum(m["n_puts"])
    half = Y_strat.shape[1] // 2
    out = np.empty((len(ds), 2))
    for r in range(len(ds)):
        snap, _ = snapshot_from_features(ds.X[r], m["n_calls"], m["n_puts"], m["family"])
        lo = HedgeStrategy.from_label(Y_strat[r, :half], nc, npt)
        up = HedgeStrategy.from_label(Y_strat[r, half:], nc, npt)
        out[r] = strategy_cost(lo, snap, sub=True), strategy_cost(up, snap)
    return out
