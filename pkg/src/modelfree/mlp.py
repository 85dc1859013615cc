"""Fully connected ReLU network trained with Adam on a mean squared error.

Everything runs in float64.  Weight matrices have shape (fan_out, fan_in) and a
batch is a matrix with one sample per row, so a layer computes ``X @ M.T + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

MODEL_VERSION = 1


@dataclass
class MlpNetwork:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (M, b) in enumerate(zip(self.weights, self.biases)):
            if M.ndim != 2 or b.shape != (M.shape[0],):
                raise ValueError(f"layer {i}: weight {M.shape} and bias {b.shape} do not match")
            if i and M.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: fan-in {M.shape[1]} != previous width {self.weights[i - 1].shape[0]}")
            if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [M.shape[0] for M in self.weights]

    def n_params(self) -> int:
        return sum(M.size + b.size for M, b in zip(self.weights, self.biases))

    def params(self) -> List[np.ndarray]:
        out = []
        for M, b in zip(self.weights, self.biases):
            out += [M, b]
        return out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([M.copy() for M in self.weights], [b.copy() for b in self.biases])


def _check_dims(dims: Sequence[int]) -> List[int]:
    dims = [int(h) for h in dims]
    if len(dims) < 2 or any(h < 1 for h in dims):
        raise ValueError(f"invalid layer sizes {dims}: need at least input and output, all >= 1")
    return dims


def init(dims: Sequence[int], seed: int = 0) -> MlpNetwork:
    """Uniform weights in +-sqrt(6 / fan_in), zero biases."""
    dims = _check_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(weights, biases)


def _as_batch(net: MlpNetwork, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.dims[0]:
        raise ValueError(f"input width {X.shape[-1]} does not match network input {net.dims[0]}")
    return X, single


def forward(net: MlpNetwork, x) -> np.ndarray:
    X, single = _as_batch(net, x)
    h = X
    last = len(net.weights) - 1
    for i, (M, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ M.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def loss_and_gradients(net: MlpNetwork, X, T):
    """MSE averaged over batch and outputs, with its gradient per parameter."""
    X, _ = _as_batch(net, X)
    T = np.asarray(T, dtype=float).reshape(X.shape[0], -1)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if T.shape[1] != net.dims[-1]:
        raise ValueError(f"target width {T.shape[1]} does not match network output {net.dims[-1]}")
    acts = [X]
    h = X
    last = len(net.weights) - 1
    for i, (M, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ M.T + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    err = acts[-1] - T
    loss = float(np.mean(err ** 2))
    delta = (2.0 / err.size) * err
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for i in range(last, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i]) * (acts[i] > 0)
    return loss, gw, gb


def gradients(net: MlpNetwork, X, T):
    """Gradient of the MSE as ``(weight_grads, bias_grads)``."""
    _, gw, gb = loss_and_gradients(net, X, T)
    return gw, gb


def mse(net: MlpNetwork, X, T) -> float:
    out = forward(net, X)
    return float(np.mean((out - np.asarray(T, dtype=float).reshape(out.shape)) ** 2))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Optional[List[np.ndarray]] = None
    v: Optional[List[np.ndarray]] = None

    @classmethod
    def fresh(cls, net: MlpNetwork, lr: float = 1e-3) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in net.params()], v=[np.zeros_like(p) for p in net.params()])


def adam_step(state: AdamState, net: MlpNetwork, grads) -> Tuple[MlpNetwork, AdamState]:
    """One bias-corrected Adam update, applied in place; returns ``(net, state)``."""
    gw, gb = grads
    g = []
    for a, b in zip(gw, gb):
        g += [a, b]
    if state.m is None:
        state.m = [np.zeros_like(p) for p in net.params()]
        state.v = [np.zeros_like(p) for p in net.params()]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, gi, m, v in zip(net.params(), g, state.m, state.v):
        if gi.shape != p.shape:
            raise ValueError(f"gradient shape {gi.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * gi
        v *= state.beta2
        v += (1.0 - state.beta2) * gi * gi
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


@dataclass
class Scaler:
    """Min-max map of each feature to [0, 1]; constant features map to 0."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=float)
        self.max = np.asarray(self.max, dtype=float)
        if self.min.shape != self.max.shape or np.any(self.max < self.min):
            raise ValueError("scaler needs max >= min per feature")

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.min.size:
            raise ValueError(f"feature width {X.shape[-1]} != scaler width {self.min.size}")
        span = self.max - self.min
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - self.min) / safe, 0.0)


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 1000
    patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    lr: float = 1e-3

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise ValueError("validation fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class History:
    train_mse: List[float] = field(default_factory=list)
    val_mse: List[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val(self) -> float:
        return self.val_mse[self.best_epoch]


def fit(net: MlpNetwork, X, Y, config: TrainConfig = TrainConfig()):
    """Train ``net`` (a copy) and return ``(best_net, scaler, history)``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("features and targets must have the same number of rows")
    if X.shape[1] != net.dims[0] or Y.shape[1] != net.dims[-1]:
        raise ValueError(f"data widths ({X.shape[1]}, {Y.shape[1]}) do not match network {net.dims}")
    rng = np.random.default_rng(config.seed)
    n = X.shape[0]
    n_val = int(round(config.val_fraction * n))
    if n_val < 1 or n - n_val < 1:
        raise ValueError(f"{n} rows cannot be split into nonempty train and validation parts")
    perm = rng.permutation(n)
    tr, va = perm[n_val:], perm[:n_val]
    scaler = Scaler.fit(X[tr])
    Xt, Yt = scaler.transform(X[tr]), Y[tr]
    Xv, Yv = scaler.transform(X[va]), Y[va]

    net = net.copy()
    state = AdamState.fresh(net, config.lr)
    hist = History()
    best = net.copy()
    best_val = np.inf
    stale = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(Xt.shape[0])
        tot = 0.0
        for s in range(0, order.size, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss, gw, gb = loss_and_gradients(net, Xt[idx], Yt[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch starting {s}")
            tot += loss * idx.size
            adam_step(state, net, (gw, gb))
        hist.train_mse.append(tot / order.size)
        v = mse(net, Xv, Yv)
        if not np.isfinite(v):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        hist.val_mse.append(v)
        if v < best_val:
            best_val, best, stale = v, net.copy(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, scaler, hist


def predict(net: MlpNetwork, scaler: Scaler, X) -> np.ndarray:
    return forward(net, scaler.transform(X))


# --------------------------------------------------------------------------
# persistence


def _floats(a) -> str:
    return "[" + ",".join(format(float(x), ".17g") for x in np.ravel(a)) + "]"


def model_to_json(net: MlpNetwork, scaler: Scaler, meta: Optional[dict] = None) -> str:
    """Compact JSON with every float written to 17 significant digits."""
    layers = ",".join('{"w":%s,"b":%s}' % (_floats(M), _floats(b)) for M, b in zip(net.weights, net.biases))
    return ('{"version":%d,"dims":%s,"layers":[%s],"scaler":{"min":%s,"max":%s},"meta":%s}\n'
            % (MODEL_VERSION, json.dumps(net.dims), layers, _floats(scaler.min), _floats(scaler.max),
               json.dumps(meta or {}, sort_keys=True)))


def save_model(path: str, net: MlpNetwork, scaler: Scaler, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(net, scaler, meta))


def model_from_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ValueError("malformed model file: missing version")
    if doc["version"] != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc['version']!r} (expected {MODEL_VERSION})")
    try:
        dims = _check_dims(doc["dims"])
        layers = doc["layers"]
        if len(layers) != len(dims) - 1:
            raise ValueError("layer count does not match dims")
        weights = [np.array(L["w"], dtype=float).reshape(o, i) for L, i, o in zip(layers, dims[:-1], dims[1:])]
        biases = [np.array(L["b"], dtype=float).reshape(o) for L, o in zip(layers, dims[1:])]
        scaler = Scaler(np.array(doc["scaler"]["min"], dtype=float), np.array(doc["scaler"]["max"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    if scaler.min.size != dims[0]:
        raise ValueError("malformed model file: scaler width does not match input width")
    return MlpNetwork(weights, biases), scaler, doc.get("meta", {})


def load_model(path: str):
    """Return ``(net, scaler, meta)``."""
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
