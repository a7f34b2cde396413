"""Probabilistic classifiers trained with minibatch SGD, plus the loss terms.

Two architectures are built in: softmax regression (``hidden_units == 0``)
and a one-hidden-layer ReLU MLP.  Binary filters are 2-output softmax models
whose positive-class probability is column 1.

Every log inside a cross-entropy or entropy term uses probabilities clamped
to ``[PROB_FLOOR, 1]``; the analytic gradients below differentiate exactly that
clamped objective.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .rng import make_rng

PROB_FLOOR = 1e-12
_LOG_FLOOR = math.log(PROB_FLOOR)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.05
    # (epoch, divisor): from that epoch on the rate is divided by divisor, cumulatively
    lr_steps: tuple = ()
    momentum: float = 0.9
    weight_decay: float = 1e-4
    mixup_mu: float = 0.0
    entropy_weight: float = 0.0
    hidden_units: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.mixup_mu < 0 or self.entropy_weight < 0 or self.hidden_units < 0:
            raise ValueError("mixup_mu, entropy_weight and hidden_units must be >= 0")
        object.__setattr__(self, "lr_steps", tuple((int(e), float(d)) for e, d in self.lr_steps))

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for start, divisor in self.lr_steps:
            if epoch >= start:
                lr /= divisor
        return lr


@dataclass
class Classifier:
    """A trained scorer.  ``params`` is ``[W, b]`` or ``[W1, b1, W2, b2]``."""

    params: list
    history: list = field(default_factory=list)

    @property
    def hidden_units(self) -> int:
        return 0 if len(self.params) == 2 else self.params[0].shape[1]

    @property
    def input_dim(self) -> int:
        return self.params[0].shape[0]

    @property
    def num_outputs(self) -> int:
        return self.params[-1].shape[0]

    def logits(self, x) -> np.ndarray:
        return _forward(self.params, np.asarray(x, dtype=np.float64))[0]

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of dimension {self.input_dim}, got shape {x.shape}")
        p = softmax(self.logits(x2))
        return p[0] if single else p

    def positive_score(self, x) -> np.ndarray:
        """Binary filters: probability of the positive class (column 1)."""
        return self.predict_proba(x)[..., 1]


def predict_proba(clf: Classifier, x) -> np.ndarray:
    return clf.predict_proba(x)


def init_classifier(input_dim: int, num_outputs: int, hidden_units: int,
                    rng: np.random.Generator) -> Classifier:
    sizes = [input_dim, num_outputs] if hidden_units == 0 else [input_dim, hidden_units, num_outputs]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(rng.uniform(-bound, bound, size=fan_out))
    return Classifier(params)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _clamped_log(p):
    return np.log(np.clip(p, PROB_FLOOR, 1.0))


def cross_entropy(target, probs) -> float:
    """``-sum(t * log p)`` for one pair, or the mean over rows for matrices."""
    t, p = np.asarray(target, float), np.asarray(probs, float)
    ce = -(t * _clamped_log(p)).sum(axis=-1)
    return float(ce.mean())


def entropy_regularizer(batch_probs) -> float:
    p = np.atleast_2d(np.asarray(batch_probs, dtype=np.float64))
    if p.size == 0 or p.shape[0] == 0:
        raise ValueError("entropy regularizer needs a non-empty batch")
    # 0 * log(0) contributes 0 since the clamped log is finite
    return float(-(p * _clamped_log(p)).sum(axis=1).mean())


def distillation_loss(y, teacher_out, student_out, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * cross_entropy(y, student_out) + (1 - lam) * cross_entropy(teacher_out, student_out)


def mixup_pair(x_i, y_i, x_j, y_j, beta: float):
    x_i, x_j = np.asarray(x_i, float), np.asarray(x_j, float)
    y_i, y_j = np.asarray(y_i, float), np.asarray(y_j, float)
    if x_i.shape != x_j.shape or y_i.shape != y_j.shape:
        raise ValueError("mixup inputs must have matching dimensions")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return beta * x_i + (1 - beta) * x_j, beta * y_i + (1 - beta) * y_j


def mixup_batch(x: np.ndarray, t: np.ndarray, mu: float, rng: np.random.Generator):
    """Mix every row with a uniformly drawn partner row, one Beta(mu, mu) weight per batch."""
    beta = rng.beta(mu, mu)
    partner = rng.integers(0, x.shape[0], size=x.shape[0])
    return mixup_pair(x, t, x[partner], t[partner], beta)


def _forward(params, x):
    if len(params) == 2:
        w, b = params
        return x @ w + b, None
    w1, b1, w2, b2 = params
    pre = x @ w1 + b1
    h = np.maximum(pre, 0.0)
    return h @ w2 + b2, (pre, h)


def batch_loss_and_grad(params, x, targets, entropy_weight: float = 0.0):
    """Mean clamped CE plus ``entropy_weight`` times the mean prediction entropy.

    Returns ``(loss, grads)`` with ``grads`` aligned to ``params``.
    """
    n = x.shape[0]
    z, cache = _forward(params, x)
    if not np.all(np.isfinite(z)):
        # the log clamp would otherwise mask NaN logits behind a finite loss
        return math.nan, [np.full_like(w, np.nan) for w in params]
    logp = _log_softmax(z)
    p = np.exp(logp)
    alive = logp > _LOG_FLOOR
    logp_c = np.where(alive, logp, _LOG_FLOOR)
    loss = -(targets * logp_c).sum() / n
    # d/dz of -sum_j t_j * clamp(log p_j): p_k * sum_j t_j a_j - t_k a_k
    ta = targets * alive
    dz = (p * ta.sum(axis=1, keepdims=True) - ta) / n
    if entropy_weight:
        loss += entropy_weight * -(p * logp_c).sum() / n
        # dH/dp_j = -(clamp log p_j + a_j); chain through the softmax Jacobian
        gp = -(logp_c + alive) / n
        dz += entropy_weight * p * (gp - (p * gp).sum(axis=1, keepdims=True))
    if len(params) == 2:
        return loss, [x.T @ dz, dz.sum(axis=0)]
    _, _, w2, _ = params
    pre, h = cache
    dh = (dz @ w2.T) * (pre > 0)
    return loss, [x.T @ dh, dh.sum(axis=0), h.T @ dz, dz.sum(axis=0)]


def train_classifier(features, targets, config: TrainConfig) -> Classifier:
    """Minibatch SGD with momentum and L2 weight decay.

    ``targets`` is an ``(n, C)`` matrix of probability vectors (one-hot or
    soft).  Mixup is applied per batch when ``config.mixup_mu > 0``.  The
    returned classifier's ``history`` holds the mean training loss per epoch.
    """
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 2 or x.shape[0] != t.shape[0] or x.shape[0] == 0:
        raise ValueError("features and targets must be non-empty matrices with matching rows")
    rng = make_rng(config.seed)
    clf = init_classifier(x.shape[1], t.shape[1], config.hidden_units, rng)
    velocity = [np.zeros_like(w) for w in clf.params]
    n, bs = x.shape[0], config.batch_size
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            xb, tb = x[idx], t[idx]
            if config.mixup_mu > 0:
                xb, tb = mixup_batch(xb, tb, config.mixup_mu, rng)
            loss, grads = batch_loss_and_grad(clf.params, xb, tb, config.entropy_weight)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss * idx.size
            for w, g, v in zip(clf.params, grads, velocity):
                g = g + config.weight_decay * w
                v *= config.momentum
                v += g
                w -= lr * v
        clf.history.append(total / n)
    return clf


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)


# Model dump: magic, version byte, one ASCII descriptor line, then little-endian float64 params.
MODEL_MAGIC = b"NOISEPU\x00"
MODEL_VERSION = 1


def save_classifier(clf: Classifier, path) -> None:
    arch = "softmax" if clf.hidden_units == 0 else "mlp"
    desc = f"{arch} in={clf.input_dim} hidden={clf.hidden_units} out={clf.num_outputs}\n"
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", MODEL_VERSION))
        fh.write(desc.encode("ascii"))
        for w in clf.params:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_classifier(path) -> Classifier:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model dump")
    if data[8] != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model dump version {data[8]}")
    end = data.index(b"\n", 9)
    fields = dict(kv.split("=") for kv in data[9:end].decode("ascii").split()[1:])
    d_in, hidden, d_out = int(fields["in"]), int(fields["hidden"]), int(fields["out"])
    sizes = [d_in, d_out] if hidden == 0 else [d_in, hidden, d_out]
    shapes: list[Sequence[int]] = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        shapes += [(a, b), (b,)]
    flat = np.frombuffer(data[end + 1:], dtype="<f8")
    if flat.size != sum(int(np.prod(s)) for s in shapes):
        raise ValueError(f"{path}: parameter block has the wrong length")
    params, offset = [], 0
    for s in shapes:
        k = int(np.prod(s))
        params.append(flat[offset:offset + k].reshape(s).astype(np.float64))
        offset += k
    return Classifier(params)
