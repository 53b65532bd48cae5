"""Small tanh multi-layer perceptron with pairwise training and gradient checking."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DEFAULT_SIZES = (4, 16, 16, 1)


@dataclass
class MlpModel:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # (fan_out, fan_in) per layer
    biases: list[np.ndarray]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(x) for x in self.sizes)
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[k + 1], self.sizes[k]) or b.shape != (self.sizes[k + 1],):
                raise ValueError(f"layer {k} has shape {w.shape}/{b.shape}, expected sizes {self.sizes}")
        if self.mean.shape != (self.sizes[0],) or self.std.shape != (self.sizes[0],):
            raise ValueError("normalization stats must match the input size")
        if np.any(self.std <= 0):
            raise ValueError("std values must be positive")

    @classmethod
    def init(cls, sizes=DEFAULT_SIZES, seed: int = 0) -> "MlpModel":
        """Glorot-uniform weights, zero biases, identity normalization."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (n_in + n_out))
            ws.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            bs.append(np.zeros(n_out))
        return cls(tuple(sizes), ws, bs, np.zeros(sizes[0]), np.ones(sizes[0]))

    @classmethod
    def zeros(cls, sizes=DEFAULT_SIZES) -> "MlpModel":
        return cls(
            tuple(sizes),
            [np.zeros((b, a)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
            np.zeros(sizes[0]),
            np.ones(sizes[0]),
        )

    def copy(self) -> "MlpModel":
        return MlpModel(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.mean.copy(), self.std.copy())

    # -- evaluation ----------------------------------------------------------

    def _activations(self, x: np.ndarray) -> list[np.ndarray]:
        h = (x - self.mean) / self.std
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if k == last else np.tanh(z)
            acts.append(h)
        return acts

    def forward_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected inputs of width {self.sizes[0]}, got shape {x.shape}")
        return self._activations(x)[-1][:, 0]

    def forward(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.sizes[0],):
            raise ValueError(f"expected {self.sizes[0]} features, got shape {x.shape}")
        return float(self.forward_batch(x[None, :])[0])

    def backward(self, x: np.ndarray, d_out: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of sum(d_out * f(x)) w.r.t. weights and biases."""
        acts = self._activations(x)
        delta = d_out[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = delta.T @ acts[k]
            gb[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k]) * (1.0 - acts[k] ** 2)
        return gw, gb

    # -- parameter vector ----------------------------------------------------

    def get_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def set_params(self, flat: np.ndarray) -> None:
        pos = 0
        for w, b in zip(self.weights, self.biases):
            for p in (w, b):
                p[...] = flat[pos : pos + p.size].reshape(p.shape)
                pos += p.size

    @staticmethod
    def flatten(gw, gb) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(gw, gb) for p in wb])

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "sizes": list(self.sizes),
            "activation": "tanh",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "norm_mean": self.mean.tolist(),
            "norm_std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        return cls(
            tuple(d["sizes"]),
            [np.array(w, dtype=float) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
            np.array(d["norm_mean"], dtype=float),
            np.array(d["norm_std"], dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- pairwise training ---------------------------------------------------------


def pairwise_loss(model: MlpModel, xi, xj, target) -> float:
    diff = model.forward_batch(xi) - model.forward_batch(xj) - np.asarray(target, dtype=float)
    return float(np.mean(diff**2))


def pairwise_grad(model: MlpModel, xi, xj, target) -> np.ndarray:
    diff = model.forward_batch(xi) - model.forward_batch(xj) - target
    d = 2.0 * diff / len(diff)
    gi = model.flatten(*model.backward(xi, d))
    gj = model.flatten(*model.backward(xj, -d))
    return gi + gj


def fit_normalization(model: MlpModel, x: np.ndarray) -> None:
    model.mean = x.mean(axis=0)
    std = x.std(axis=0)
    model.std = np.where(std > 1e-12, std, 1.0)


def train_pairwise(
    model: MlpModel,
    xi,
    xj,
    target,
    epochs: int = 200,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 64,
    momentum: float = 0.9,
    shuffle: bool = True,
    normalize: bool = True,
) -> tuple[MlpModel, list[float]]:
    """Fit f(x_i) - f(x_j) to the targets with momentum SGD.

    Returns the trained copy and the per-epoch mean training loss.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    target = np.asarray(target, dtype=float)
    if not len(target):
        raise ValueError("empty dataset")
    if not np.all(np.isfinite(target)):
        raise ValueError("targets must be finite")
    model = model.copy()
    if normalize:
        fit_normalization(model, np.vstack([xi, xj]))
    rng = np.random.default_rng(seed)
    theta = model.get_params()
    vel = np.zeros_like(theta)
    history = []
    n = len(target)
    for epoch in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            model.set_params(theta)
            loss = pairwise_loss(model, xi[idx], xj[idx], target[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}; "
                    f"|theta|max={np.abs(theta).max():.3g}, lr={lr}"
                )
            total += loss * len(idx)
            vel = momentum * vel - lr * pairwise_grad(model, xi[idx], xj[idx], target[idx])
            theta = theta + vel
        history.append(total / n)
    model.set_params(theta)
    return model, history


def grad_check(model: MlpModel, x, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of f(x)."""
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    analytic = model.flatten(*model.backward(x, np.ones(len(x))))
    work = model.copy()
    theta = work.get_params()
    worst = 0.0
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + epsilon
        work.set_params(theta)
        up = work.forward_batch(x).sum()
        theta[k] = orig - epsilon
        work.set_params(theta)
        down = work.forward_batch(x).sum()
        theta[k] = orig
        numeric = (up - down) / (2 * epsilon)
        err = abs(analytic[k] - numeric) / max(abs(analytic[k]), 1e-8)
        worst = max(worst, err)
    return worst


def sign_accuracy(model: MlpModel, xi, xj, target) -> float:
    """Fraction of pairs where sign(u_i - u_j) matches sign(target); zero targets skipped."""
    target = np.asarray(target, dtype=float)
    pred = model.forward_batch(xi) - model.forward_batch(xj)
    mask = target != 0
    if not mask.any():
        return 1.0
    return float(np.mean(np.sign(pred[mask]) == np.sign(target[mask])))
