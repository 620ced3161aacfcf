"""Small classifiers with hand-derived gradients and the local training loop.

Parameters always travel as a single flat float64 vector. ``Architecture``
knows how to slice that vector into weight matrices and bias vectors, so
flattening is a view operation and deltas are plain vector subtraction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Architecture",
    "ModelParams",
    "as_gradient",
    "forward_loss",
    "backward",
    "predict",
    "accuracy",
    "local_train",
]


@dataclass(frozen=True)
class Architecture:
    kind: str  # "logreg" | "mlp"
    dim: int
    classes: int
    hidden: int = 32

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ValueError(f"unknown architecture {self.kind!r}")

    @property
    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        d, k, h = self.dim, self.classes, self.hidden
        if self.kind == "logreg":
            return [("W", (k, d)), ("b", (k,))]
        return [("W1", (h, d)), ("b1", (h,)), ("W2", (k, h)), ("b2", (k,))]

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes)

    def unflatten(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Split a flat vector into named views (no copy)."""
        if theta.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {theta.shape}, expected ({self.size},)")
        out, pos = {}, 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            out[name] = theta[pos:pos + n].reshape(shape)
            pos += n
        return out

    def flatten(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(parts[name], dtype=np.float64).ravel() for name, _ in self.shapes])

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Zeros for logreg; Glorot-uniform weights and zero biases for mlp."""
        theta = np.zeros(self.size)
        if self.kind == "mlp":
            p = self.unflatten(theta)
            for name in ("W1", "W2"):
                fan_out, fan_in = p[name].shape
                a = np.sqrt(6.0 / (fan_in + fan_out))
                p[name][...] = rng.uniform(-a, a, size=p[name].shape)
        return theta


@dataclass
class ModelParams:
    """A parameter vector tagged with its architecture."""

    arch: Architecture
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.arch.size,):
            raise ValueError("parameter vector does not match architecture")

    @property
    def size(self) -> int:
        return self.arch.size

    def flatten(self) -> np.ndarray:
        return self.theta.copy()

    def unflatten(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.arch.unflatten(self.theta).items()}

    @classmethod
    def from_parts(cls, arch: Architecture, parts: dict[str, np.ndarray]) -> "ModelParams":
        return cls(arch, arch.flatten(parts))


def as_gradient(values) -> np.ndarray:
    """Validate a model delta: 1-D float64 with finite entries."""
    g = np.array(values, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError("gradient vector must be one-dimensional")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient vector has non-finite entries")
    return g


def _check_batch(arch: Architecture, X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != arch.dim:
        raise ValueError(f"batch features have shape {X.shape}, expected (n, {arch.dim})")
    if len(X) == 0:
        raise ValueError("empty batch")
    if y.shape != (len(X),):
        raise ValueError("labels do not match batch size")


def _logits(arch: Architecture, theta: np.ndarray, X: np.ndarray):
    p = arch.unflatten(theta)
    if arch.kind == "logreg":
        return X @ p["W"].T + p["b"], None
    pre = X @ p["W1"].T + p["b1"]
    hidden = np.maximum(pre, 0.0)
    return hidden @ p["W2"].T + p["b2"], (pre, hidden)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward_loss(arch: Architecture, theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy. Returns ``(loss, logits)``."""
    _check_batch(arch, X, y)
    logits, _ = _logits(arch, theta, X)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(len(y)), y].mean()
    return float(loss), logits


def backward(arch: Architecture, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of the mean cross-entropy, flattened like ``theta``."""
    _check_batch(arch, X, y)
    n = len(y)
    logits, cache = _logits(arch, theta, X)
    dz = np.exp(_log_softmax(logits))
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grad = np.empty_like(theta)
    g = arch.unflatten(grad)
    if arch.kind == "logreg":
        g["W"][...] = dz.T @ X
        g["b"][...] = dz.sum(axis=0)
        return grad
    pre, hidden = cache
    p = arch.unflatten(theta)
    g["W2"][...] = dz.T @ hidden
    g["b2"][...] = dz.sum(axis=0)
    dh = (dz @ p["W2"]) * (pre > 0)
    g["W1"][...] = dh.T @ X
    g["b1"][...] = dh.sum(axis=0)
    return grad


def predict(arch: Architecture, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    logits, _ = _logits(arch, theta, X)
    return logits.argmax(axis=1)


def accuracy(arch: Architecture, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    return float((predict(arch, theta, X) == y).mean())


def local_train(
    arch: Architecture,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """Run ``epochs`` of shuffled mini-batch Adam from ``theta``; return the delta.

    The optimizer state starts fresh on every call and ``theta`` is never
    modified.
    """
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    w = theta.copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    step = 0
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            g = backward(arch, w, X[idx], y[idx])
            step += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** step)
            v_hat = v / (1 - beta2 ** step)
            w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return as_gradient(w - theta)
