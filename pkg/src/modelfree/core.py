"""Market data, payoffs and the network feature layout.

Feature layout of ``feature_vector`` (per asset, in asset order)::

    call strikes ascending, call bids, call asks,
    put strikes ascending,  put bids,  put asks

followed by all spot prices and finally the payoff parameters theta
(basket weights in asset order, then the strike).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

CALL = "call"
PUT = "put"


@dataclass(frozen=True)
class OptionQuote:
    kind: str
    strike: float
    bid: float
    ask: float

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in (CALL, PUT):
            raise ValueError(f"option kind must be 'call' or 'put', got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        for name in ("strike", "bid", "ask"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def payoff(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == CALL:
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True)
class MarketSnapshot:
    """Spot prices and one option chain per asset, all at a single maturity."""

    spots: Tuple[float, ...]
    chains: Tuple[Tuple[OptionQuote, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "spots", tuple(float(s) for s in self.spots))
        object.__setattr__(self, "chains", tuple(tuple(ch) for ch in self.chains))

    @property
    def d(self) -> int:
        return len(self.spots)

    def quotes(self, asset: int, kind: str) -> List[OptionQuote]:
        """Quotes of one kind on one asset, sorted by strike."""
        return sorted((q for q in self.chains[asset] if q.kind == kind), key=lambda q: q.strike)

    def n_calls(self) -> List[int]:
        return [len(self.quotes(k, CALL)) for k in range(self.d)]

    def n_puts(self) -> List[int]:
        return [len(self.quotes(k, PUT)) for k in range(self.d)]

    def instruments(self) -> List[Tuple[int, OptionQuote]]:
        """All quotes as (asset, quote) in canonical order: calls of every asset, then puts."""
        out = []
        for kind in (CALL, PUT):
            for k in range(self.d):
                out.extend((k, q) for q in self.quotes(k, kind))
        return out

    def strikes(self) -> List[float]:
        return [q.strike for ch in self.chains for q in ch]

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "spots": list(self.spots),
            "chains": [[{"kind": q.kind, "strike": q.strike, "bid": q.bid, "ask": q.ask} for q in ch]
                       for ch in self.chains],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarketSnapshot":
        try:
            spots = data["spots"]
            chains = [[OptionQuote(q["kind"], q["strike"], q["bid"], q["ask"]) for q in ch]
                      for ch in data["chains"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed snapshot: {exc}") from exc
        if len(chains) != len(spots):
            raise ValueError(f"snapshot has {len(spots)} spots but {len(chains)} chains")
        return cls(spots, chains)


def load_snapshot(path: str) -> MarketSnapshot:
    """Read a snapshot from JSON, or from CSV with a ``spots`` header row.

    The CSV form is::

        spots,100,50
        asset,kind,strike,bid,ask
        0,call,95,6.1,6.3
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.lower().endswith(".csv"):
        rows = [r for r in csv.reader(text.splitlines()) if r]
        if not rows or rows[0][0].strip().lower() != "spots":
            raise ValueError("snapshot CSV must start with a 'spots' row")
        spots = [float(v) for v in rows[0][1:]]
        chains = [[] for _ in spots]
        for r in rows[1:]:
            if r[0].strip().lower() == "asset":
                continue
            k = int(r[0])
            if not 0 <= k < len(spots):
                raise ValueError(f"asset index {k} out of range")
            chains[k].append(OptionQuote(r[1].strip(), r[2], r[3], r[4]))
        return MarketSnapshot(spots, chains)
    return MarketSnapshot.from_dict(json.loads(text))


def save_snapshot(snapshot: MarketSnapshot, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(snapshot.to_dict(), fh, indent=1)
        fh.write("\n")


def validate_snapshot(snapshot: MarketSnapshot) -> List[str]:
    """Return human-readable invariant violations; empty when the snapshot is usable."""
    problems = []
    if snapshot.d < 1:
        problems.append("snapshot has no assets")
    if len(snapshot.chains) != snapshot.d:
        problems.append(f"{snapshot.d} spots but {len(snapshot.chains)} chains")
    for k, s in enumerate(snapshot.spots):
        if not np.isfinite(s) or s < 0:
            problems.append(f"asset {k}: spot {s} must be finite and nonnegative")
    for k, chain in enumerate(snapshot.chains):
        seen = set()
        for j, q in enumerate(chain):
            tag = f"asset {k} quote {j} ({q.kind} K={q.strike:g})"
            if not all(np.isfinite([q.strike, q.bid, q.ask])):
                problems.append(f"{tag}: non-finite value")
                continue
            if q.strike < 0:
                problems.append(f"{tag}: negative strike")
            if q.bid < 0:
                problems.append(f"{tag}: negative bid")
            if q.bid > q.ask:
                problems.append(f"{tag}: bid {q.bid:g} > ask {q.ask:g}")
            key = (q.kind, q.strike)
            if key in seen:
                problems.append(f"{tag}: duplicate {q.kind} strike (redundant instrument)")
            seen.add(key)
    return problems


@dataclass(frozen=True)
class PayoffSpec:
    """Call on one asset, or basket call ``max(sum_k w_k s_k - L, 0)``."""

    kind: str
    strike: float
    asset: int = 0
    weights: Tuple[float, ...] = field(default_factory=tuple)

    @classmethod
    def call(cls, strike: float, asset: int = 0) -> "PayoffSpec":
        return cls("call", float(strike), int(asset))

    @classmethod
    def basket(cls, weights: Sequence[float], strike: float) -> "PayoffSpec":
        return cls("basket", float(strike), 0, tuple(float(w) for w in weights))

    @property
    def theta(self) -> np.ndarray:
        if self.kind == "call":
            return np.array([self.strike])
        return np.array([*self.weights, self.strike])

    def check(self, d: int) -> None:
        if self.kind == "call":
            if not 0 <= self.asset < d:
                raise ValueError(f"call asset index {self.asset} out of range for d={d}")
        elif self.kind == "basket":
            if len(self.weights) != d:
                raise ValueError(f"basket has {len(self.weights)} weights for d={d}")
        else:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("payoff parameters must be finite")

    def kinks(self, d: int, cap: float) -> List[List[float]]:
        """Per-axis points where the payoff's kink meets that axis, within [0, cap]."""
        pts: List[List[float]] = [[] for _ in range(d)]
        if self.kind == "call":
            if 0 <= self.strike <= cap:
                pts[self.asset].append(self.strike)
        else:
            for k, w in enumerate(self.weights):
                if w > 0 and 0 <= self.strike / w <= cap:
                    pts[k].append(self.strike / w)
        return pts

    def normalizer(self, spots: Sequence[float]) -> float:
        """Scale used for relative errors: the spot, or the weighted spot sum."""
        if self.kind == "call":
            return float(spots[self.asset])
        return float(np.dot(self.weights, spots))


def evaluate_payoff(spec: PayoffSpec, s) -> np.ndarray:
    """Payoff at one point (shape ``(d,)``) or many points (shape ``(n, d)``)."""
    s = np.asarray(s, dtype=float)
    pts = np.atleast_2d(s)
    d = pts.shape[1]
    spec.check(d)
    if spec.kind == "call":
        out = np.maximum(pts[:, spec.asset] - spec.strike, 0.0)
    else:
        out = np.maximum(pts @ np.asarray(spec.weights) - spec.strike, 0.0)
    return out[0] if s.ndim == 1 else out


def feature_vector(snapshot: MarketSnapshot, spec: PayoffSpec) -> np.ndarray:
    parts: List[Iterable[float]] = []
    for k in range(snapshot.d):
        for kind in (CALL, PUT):
            qs = snapshot.quotes(k, kind)
            parts.append([q.strike for q in qs])
            parts.append([q.bid for q in qs])
            parts.append([q.ask for q in qs])
    parts.append(snapshot.spots)
    parts.append(spec.theta)
    return np.concatenate([np.asarray(list(p), dtype=float) for p in parts])


def feature_names(n_calls: Sequence[int], n_puts: Sequence[int], kind: str) -> List[str]:
    """Column names matching ``feature_vector`` for the given chain sizes."""
    names = []
    d = len(n_calls)
    for k in range(d):
        for opt, cnt in (("call", n_calls[k]), ("put", n_puts[k])):
            for fld in ("strike", "bid", "ask"):
                names.extend(f"a{k}_{opt}_{fld}_{j}" for j in range(cnt))
    names.extend(f"spot_{k}" for k in range(d))
    if kind == "call":
        names.append("theta_L")
    else:
        names.extend(f"theta_w{k}" for k in range(d))
        names.append("theta_L")
    return names


def snapshot_from_features(x: Sequence[float], n_calls: Sequence[int], n_puts: Sequence[int],
                           kind: str) -> Tuple[MarketSnapshot, PayoffSpec]:
    """Inverse of ``feature_vector`` given the chain sizes and payoff family."""
    x = np.asarray(x, dtype=float)
    d = len(n_calls)
    expected = 3 * (sum(n_calls) + sum(n_puts)) + d + (1 if kind == "call" else d + 1)
    if x.size != expected:
        raise ValueError(f"feature vector has {x.size} entries, layout expects {expected}")
    pos = 0
    chains = []
    for k in range(d):
        chain = []
        for opt, cnt in ((CALL, n_calls[k]), (PUT, n_puts[k])):
            strikes, bids, asks = x[pos:pos + cnt], x[pos + cnt:pos + 2 * cnt], x[pos + 2 * cnt:pos + 3 * cnt]
            pos += 3 * cnt
            chain.extend(OptionQuote(opt, K, b, a) for K, b, a in zip(strikes, bids, asks))
        chains.append(chain)
    spots = x[pos:pos + d]
    pos += d
    if kind == "call":
        spec = PayoffSpec.call(x[pos])
        pos += 1
    else:
        spec = PayoffSpec.basket(x[pos:pos + d], x[pos + d])
    return MarketSnapshot(spots, chains), spec
