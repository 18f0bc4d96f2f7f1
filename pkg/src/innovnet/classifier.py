"""Trainable pair classifier: a two-hidden-layer ReLU head over 4d pair
features, trained with decoupled weight decay, adaptive moments, linear
warmup/decay, and global gradient clipping.

Everything is plain numpy with hand-written backpropagation so gradients
can be checked against finite differences and runs stay deterministic
under a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the step index for diagnosis."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 32          # unstated upstream; documented default
    lr: float = 2e-5
    weight_decay: float = 0.01
    warmup_frac: float = 0.1
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.1
    hidden: tuple[int, int] | None = None   # defaults to (d, d//2) for input 4d
    seed: int = 0


def schedule_lr(step: int, total_steps: int, peak_lr: float,
                warmup_frac: float = 0.1) -> float:
    """Piecewise-linear rate: 0 at step 0, peak at ceil(warmup_frac * T),
    back to 0 at step T."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    warmup = math.ceil(warmup_frac * total_steps)
    if step <= warmup:
        return peak_lr * step / warmup if warmup > 0 else peak_lr
    return peak_lr * max(0.0, (total_steps - step) / (total_steps - warmup))


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by clip_norm / ||g||_2 when the global 2-norm
    exceeds clip_norm. Returns (clipped grads, pre-clip norm)."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > clip_norm and total > 0.0:
        factor = clip_norm / total
        grads = {k: g * factor for k, g in grads.items()}
    return grads, total


class ClassifierHead:
    """MLP with two ReLU hidden layers, dropout, and a 2-logit output."""

    def __init__(self, input_dim: int, hidden: tuple[int, int],
                 dropout: float = 0.1, rng: np.random.Generator | None = None):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        rng = rng or np.random.default_rng(0)
        h1, h2 = hidden
        self.input_dim = input_dim
        self.hidden = (h1, h2)
        self.dropout = dropout
        self.params = {
            "w1": rng.normal(0.0, math.sqrt(2.0 / input_dim), size=(input_dim, h1)),
            "b1": np.zeros(h1),
            "w2": rng.normal(0.0, math.sqrt(2.0 / h1), size=(h1, h2)),
            "b2": np.zeros(h2),
            "w3": rng.normal(0.0, math.sqrt(2.0 / h2), size=(h2, 2)),
            "b3": np.zeros(2),
        }

    def logits(self, x: np.ndarray, *, train: bool = False,
               rng: np.random.Generator | None = None) -> np.ndarray:
        out, _ = self._forward(x, train=train, rng=rng)
        return out

    def _forward(self, x: np.ndarray, *, train: bool,
                 rng: np.random.Generator | None):
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        m1 = self._dropout_mask(a1.shape, train, rng)
        d1 = a1 * m1
        z2 = d1 @ p["w2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        m2 = self._dropout_mask(a2.shape, train, rng)
        d2 = a2 * m2
        out = d2 @ p["w3"] + p["b3"]
        cache = (x, z1, m1, d1, z2, m2, d2)
        return out, cache

    def _dropout_mask(self, shape, train: bool, rng):
        if not train or self.dropout == 0.0:
            return np.ones(shape)
        keep = 1.0 - self.dropout
        return (rng.random(shape) < keep) / keep

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, *,
                       train: bool = False,
                       rng: np.random.Generator | None = None):
        """Mean cross-entropy over 2 logits and gradients for every
        parameter. Dropout applies only when train=True."""
        n = x.shape[0]
        out, cache = self._forward(x, train=train, rng=rng)
        shifted = out - out.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        loss = -float(np.mean(np.log(probs[np.arange(n), y])))

        x_in, z1, m1, d1, z2, m2, d2 = cache
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        p = self.params
        grads = {}
        grads["w3"] = d2.T @ dlogits
        grads["b3"] = dlogits.sum(axis=0)
        dd2 = dlogits @ p["w3"].T
        da2 = dd2 * m2
        dz2 = da2 * (z2 > 0.0)
        grads["w2"] = d1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dd1 = dz2 @ p["w2"].T
        da1 = dd1 * m1
        dz1 = da1 * (z1 > 0.0)
        grads["w1"] = x_in.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x, train=False), axis=1)


class MomentOptimizer:
    """Adaptive-moment update with decoupled weight decay.

    Per step t (1-based): first/second moment EMAs with bias correction,
    then p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
    """

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** t)
            v_hat = self.v[k] / (1 - b2 ** t)
            p -= lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float


def train_head(features: np.ndarray, labels: np.ndarray,
               config: TrainConfig) -> tuple[ClassifierHead, list[StepRecord]]:
    """Train a fresh head on (n, 4d) features and {0,1} labels.

    The schedule ramps linearly to the peak rate over the first 10% of
    steps then decays linearly to zero, stepped per batch; gradients are
    clipped at a global 2-norm of clip_norm before each update. Update i
    (0-based) uses schedule_lr(i), so the very first step has rate 0.
    """
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    labels = np.asarray(labels, dtype=int)
    input_dim = features.shape[1]
    if input_dim % 4 != 0:
        raise ValueError(f"pair features must have dimension 4d, got {input_dim}")
    d = input_dim // 4
    hidden = config.hidden or (d, max(1, d // 2))

    rng = np.random.default_rng(config.seed)
    head = ClassifierHead(input_dim, hidden, dropout=config.dropout, rng=rng)
    optimizer = MomentOptimizer(head.params, beta1=config.beta1,
                                beta2=config.beta2, eps=config.eps,
                                weight_decay=config.weight_decay)
    batches_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    history: list[StepRecord] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            loss, grads = head.loss_and_grads(features[idx], labels[idx],
                                              train=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingDivergedError(step, loss)
            grads, _ = clip_gradients(grads, config.clip_norm)
            lr = schedule_lr(step, total_steps, config.lr, config.warmup_frac)
            optimizer.step(grads, lr)
            history.append(StepRecord(step=step, loss=loss, lr=lr))
            step += 1
    return head, history


def evaluate_head(head: ClassifierHead, features: np.ndarray,
                  labels: np.ndarray) -> float:
    """Argmax accuracy with dropout disabled."""
    if features.shape[0] == 0:
        raise ValueError("empty evaluation set")
    preds = head.predict(features)
    return float(np.mean(preds == np.asarray(labels, dtype=int)))
