"""Two-layer ReLU/softmax classifier trained by per-sample gradient descent.

The network is W_hidden (H x (d+1)) -> ReLU -> W_output (C x (H+1)) ->
softmax, with the bias folded into the last column of each weight matrix.
Training performs one stochastic update per sample; the inner epoch loop is
JIT-compiled with numba when available (pure-Python execution of the same
function is the fallback).  Losses are computed in log-space so they stay
finite even when the softmax saturates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, derive_seed

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


class DivergenceError(RuntimeError):
    """Training or a gradient step produced non-finite values."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and training hyperparameters.

    Learning rates are stored as numerators: the effective per-layer rates
    are ``eta_hidden_scale / N`` and ``eta_output_scale / N``, recomputed
    from the training-set size N at the start of every training call.
    ``epochs`` defaults to a desk-scale budget; reproduction-scale budgets
    (tens of thousands) are supported through the same field.
    """

    d: int
    hidden: int = 50
    n_classes: int = 4
    eta_hidden_scale: float = 50.0
    eta_output_scale: float = 35.0
    epochs: int = 2000
    loss_threshold: float = 0.0
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1 or self.hidden < 1:
            raise ValueError("d and hidden width must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eta_hidden_scale <= 0 or self.eta_output_scale <= 0:
            raise ValueError("learning-rate scales must be positive")
        if self.loss_threshold < 0:
            raise ValueError("loss_threshold must be >= 0")

    def rates_for(self, n: int) -> tuple[float, float]:
        return self.eta_hidden_scale / n, self.eta_output_scale / n


@dataclass
class MlpModel:
    """Weights plus the config they were built with.  Immutable once built."""

    w_hidden: np.ndarray  # (H, d+1), last column is the bias
    w_output: np.ndarray  # (C, H+1), last column is the bias
    config: MlpConfig

    def __post_init__(self) -> None:
        self.w_hidden = np.ascontiguousarray(self.w_hidden, dtype=np.float64)
        self.w_output = np.ascontiguousarray(self.w_output, dtype=np.float64)
        h, c = self.config.hidden, self.config.n_classes
        if self.w_hidden.shape != (h, self.config.d + 1):
            raise ValueError("hidden weight shape does not match config")
        if self.w_output.shape != (c, h + 1):
            raise ValueError("output weight shape does not match config")
        if not (np.all(np.isfinite(self.w_hidden)) and np.all(np.isfinite(self.w_output))):
            raise DivergenceError("model weights are not finite")
        self.w_hidden.flags.writeable = False
        self.w_output.flags.writeable = False

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps({
            "config": asdict(self.config),
            "W_hidden": self.w_hidden.tolist(),
            "W_output": self.w_output.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        obj = json.loads(text)
        return cls(np.array(obj["W_hidden"]), np.array(obj["W_output"]),
                   MlpConfig(**obj["config"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class TrainTrace:
    """Per-epoch mean cross-entropy and why training stopped."""

    losses: list[float] = field(default_factory=list)
    stop_reason: str = "epoch_budget"  # or "loss_threshold"

    @property
    def epochs_run(self) -> int:
        return len(self.losses)


def init_model(config: MlpConfig) -> MlpModel:
    """Seeded init: weights uniform in +/- 1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    w_hidden = np.zeros((config.hidden, config.d + 1))
    w_output = np.zeros((config.n_classes, config.hidden + 1))
    bound_h = 1.0 / np.sqrt(config.d)
    bound_o = 1.0 / np.sqrt(config.hidden)
    w_hidden[:, :config.d] = rng.uniform(-bound_h, bound_h, (config.hidden, config.d))
    w_output[:, :config.hidden] = rng.uniform(-bound_o, bound_o, (config.n_classes, config.hidden))
    return MlpModel(w_hidden, w_output, config)


def _extend(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, [1.0]])


def forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample pass: returns (class posterior, hidden activations)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.config.d,):
        raise ValueError(f"expected feature vector of length {model.config.d}, got shape {x.shape}")
    h = np.maximum(0.0, model.w_hidden @ _extend(x))
    logits = model.w_output @ _extend(h)
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum(), h


def forward_batch(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pass over rows of X: returns (posteriors, hidden activations)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.d:
        raise ValueError(f"expected (n, {model.config.d}) features, got shape {X.shape}")
    d, h_w = model.config.d, model.config.hidden
    hidden = np.maximum(0.0, X @ model.w_hidden[:, :d].T + model.w_hidden[:, d])
    logits = hidden @ model.w_output[:, :h_w].T + model.w_output[:, h_w]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True), hidden


def _mean_loss_raw(w_hid: np.ndarray, w_out: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    d = X.shape[1]
    h_w = w_hid.shape[0]
    hidden = np.maximum(0.0, X @ w_hid[:, :d].T + w_hid[:, d])
    logits = hidden @ w_out[:, :h_w].T + w_out[:, h_w]
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(y.size), y]))


def mean_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy, computed via log-sum-exp for stability."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    return _mean_loss_raw(model.w_hidden, model.w_output, X, y)


def batch_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the mean cross-entropy over a batch.

    Output delta is softmax(logits) - onehot(y); the hidden delta is the
    back-projected output delta masked by the ReLU derivative (0 at the
    kink).  Returned arrays match the weight matrix shapes.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    d, h_w = model.config.d, model.config.hidden
    pre_h = X @ model.w_hidden[:, :d].T + model.w_hidden[:, d]
    hidden = np.maximum(0.0, pre_h)
    logits = hidden @ model.w_output[:, :h_w].T + model.w_output[:, h_w]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    delta_o = probs.copy()
    delta_o[np.arange(n), y] -= 1.0
    delta_o /= n
    g_out = np.empty_like(model.w_output)
    g_out[:, :h_w] = delta_o.T @ hidden
    g_out[:, h_w] = delta_o.sum(axis=0)
    delta_h = (delta_o @ model.w_output[:, :h_w]) * (pre_h > 0.0)
    g_hid = np.empty_like(model.w_hidden)
    g_hid[:, :d] = delta_h.T @ X
    g_hid[:, d] = delta_h.sum(axis=0)
    return g_hid, g_out


def backprop_step(model: MlpModel, x: np.ndarray, y: int,
                  eta_hidden: float, eta_output: float) -> MlpModel:
    """One stochastic gradient step on -log p[y] for a single sample."""
    g_hid, g_out = batch_gradients(model, np.asarray(x, dtype=np.float64)[None, :],
                                   np.array([y]))
    w_hidden = model.w_hidden - eta_hidden * g_hid
    w_output = model.w_output - eta_output * g_out
    if not (np.all(np.isfinite(w_hidden)) and np.all(np.isfinite(w_output))):
        raise DivergenceError("gradient step produced non-finite weights; lower the learning rates")
    return MlpModel(w_hidden, w_output, model.config)


def _sgd_epoch(w_hid, w_out, X, y, order, eta_h, eta_o):
    # One shuffled pass of per-sample updates; returns the mean of the
    # pre-update sample losses.  Written with plain loops so numba can
    # compile it; runs unchanged (slowly) in pure Python.
    n, d = X.shape
    n_hidden = w_hid.shape[0]
    n_cls = w_out.shape[0]
    x_ext = np.empty(d + 1)
    h_ext = np.empty(n_hidden + 1)
    x_ext[d] = 1.0
    h_ext[n_hidden] = 1.0
    delta_o = np.empty(n_cls)
    delta_h = np.empty(n_hidden)
    total = 0.0
    for t in range(n):
        i = order[t]
        for j in range(d):
            x_ext[j] = X[i, j]
        z_h = np.dot(w_hid, x_ext)
        for j in range(n_hidden):
            h_ext[j] = z_h[j] if z_h[j] > 0.0 else 0.0
        z_o = np.dot(w_out, h_ext)
        m = z_o[0]
        for c in range(1, n_cls):
            if z_o[c] > m:
                m = z_o[c]
        s = 0.0
        for c in range(n_cls):
            s += np.exp(z_o[c] - m)
        lse = m + np.log(s)
        total += lse - z_o[y[i]]
        for c in range(n_cls):
            delta_o[c] = np.exp(z_o[c] - lse)
        delta_o[y[i]] -= 1.0
        for j in range(n_hidden):
            acc = 0.0
            for c in range(n_cls):
                acc += delta_o[c] * w_out[c, j]
            delta_h[j] = acc if z_h[j] > 0.0 else 0.0
        for c in range(n_cls):
            dc = eta_o * delta_o[c]
            for j in range(n_hidden + 1):
                w_out[c, j] -= dc * h_ext[j]
        for j in range(n_hidden):
            dj = eta_h * delta_h[j]
            for k in range(d + 1):
                w_hid[j, k] -= dj * x_ext[k]
    return total / n


if numba is not None:
    _sgd_epoch = numba.njit(cache=True)(_sgd_epoch)


def train(model: MlpModel, labeled: Dataset) -> tuple[MlpModel, TrainTrace]:
    """Per-sample SGD over the labelled set until the epoch budget or until
    the mean epoch loss drops below ``loss_threshold``.

    Per-layer rates are set from the current training-set size N.  The
    sample order is reshuffled every epoch (seeded) when shuffle is on.
    """
    cfg = model.config
    if labeled.n == 0:
        raise ValueError("cannot train on an empty dataset")
    if np.any(~labeled.is_labeled()):
        raise ValueError("training set contains unlabelled samples")
    if labeled.d != cfg.d:
        raise ValueError(f"dataset width {labeled.d} does not match config d={cfg.d}")
    eta_h, eta_o = cfg.rates_for(labeled.n)
    rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    w_hid = model.w_hidden.copy()
    w_out = model.w_output.copy()
    X = labeled.features
    y = labeled.labels
    trace = TrainTrace()
    order = np.arange(labeled.n)
    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            order = rng.permutation(labeled.n)
        loss = _sgd_epoch(w_hid, w_out, X, y, order, eta_h, eta_o)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch + 1}", epoch=epoch + 1)
        trace.losses.append(float(loss))
        if cfg.loss_threshold > 0.0 and loss < cfg.loss_threshold:
            trace.stop_reason = "loss_threshold"
            break
    return MlpModel(w_hid, w_out, cfg), trace


def grad_check(model: MlpModel, X: np.ndarray, y: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    The denominator is floored at 1e-3 so finite-difference noise on
    near-zero entries does not swamp the measure; a genuinely wrong
    analytic gradient still produces errors orders of magnitude above any
    sane threshold.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    analytic = batch_gradients(model, X, y)
    weights = (model.w_hidden.copy(), model.w_output.copy())
    worst = 0.0
    for k, grad in enumerate(analytic):
        w = weights[k]
        for idx in np.ndindex(*w.shape):
            saved = w[idx]
            w[idx] = saved + eps
            up = _mean_loss_raw(weights[0], weights[1], X, y)
            w[idx] = saved - eps
            down = _mean_loss_raw(weights[0], weights[1], X, y)
            w[idx] = saved
            fd = (up - down) / (2.0 * eps)
            a = grad[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
            if rel > worst:
                worst = rel
    return worst


def predict_labels(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    probs, _ = forward_batch(model, X)
    return np.argmax(probs, axis=1)


def accuracy(model: MlpModel, labeled: Dataset) -> float:
    """Fraction of labelled samples whose argmax class matches the label."""
    if labeled.n == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    if np.any(~labeled.is_labeled()):
        raise ValueError("accuracy requires every sample to be labelled")
    return float(np.mean(predict_labels(model, labeled.features) == labeled.labels))
