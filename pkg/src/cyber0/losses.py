"""Loss models: multinomial logistic regression and a strongly convex quadratic.

Both expose the same surface: ``dimension``, ``eval(w, batch)``,
``grad(w, batch)``, and the engine fast path ``loss_batch_multi`` that
evaluates one batch under many parameter variants in a single pass.

A batch is a pair ``(X, y)`` of features (rows in [0, 1]) and integer
labels; the quadratic model ignores it (every sample yields the same loss).
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .core import ParamVector

Batch = tuple[np.ndarray, np.ndarray] | None


class LossModel(Protocol):
    dimension: int

    def eval(self, w: ParamVector, batch: Batch) -> float: ...

    def grad(self, w: ParamVector, batch: Batch) -> ParamVector: ...

    def loss_batch_multi(self, variants: np.ndarray, batch: Batch) -> np.ndarray: ...


class LogisticRegressionModel:
    """Mean softmax cross-entropy with the bias as a trailing weight row.

    The flat parameter vector reshapes row-major to (p + 1, C); logits are
    X @ W[:p] + W[p], stabilized by per-row max subtraction.
    """

    def __init__(self, input_dim: int = 784, num_classes: int = 10):
        if input_dim < 1 or num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.dimension = (input_dim + 1) * num_classes

    def _check_batch(self, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
        if batch is None:
            raise ValueError("logistic regression requires a (features, labels) batch")
        X, y = batch
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"feature rows must have length {self.input_dim}, got {X.shape}")
        if len(X) == 0 or len(X) != len(y):
            raise ValueError("batch must be nonempty with matching feature/label counts")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        return X, y

    def _weights(self, w: ParamVector) -> np.ndarray:
        return w.reshape(self.input_dim + 1, self.num_classes)

    def logits(self, w: ParamVector, X: np.ndarray) -> np.ndarray:
        W = self._weights(w)
        return X @ W[:-1] + W[-1]

    def eval(self, w: ParamVector, batch: Batch) -> float:
        X, y = self._check_batch(batch)
        L = self.logits(w, X)
        m = L.max(axis=1)
        true = L[np.arange(len(y)), y]
        L = L - m[:, None]
        np.exp(L, out=L)
        lse = np.log(L.sum(axis=1))
        lse += m
        return float(np.mean(lse - true))

    def grad(self, w: ParamVector, batch: Batch) -> ParamVector:
        X, y = self._check_batch(batch)
        L = self.logits(w, X)
        L -= L.max(axis=1)[:, None]
        np.exp(L, out=L)
        L /= L.sum(axis=1)[:, None]
        L[np.arange(len(y)), y] -= 1.0  # softmax minus one-hot
        L /= len(y)
        g = np.empty((self.input_dim + 1, self.num_classes))
        g[:-1] = X.T @ L
        g[-1] = L.sum(axis=0)
        return g.reshape(-1)

    def loss_batch_multi(self, variants: np.ndarray, batch: Batch) -> np.ndarray:
        """Losses of one batch under S parameter variants, shape (S,)."""
        X, y = self._check_batch(batch)
        S = len(variants)
        W = variants.reshape(S, self.input_dim + 1, self.num_classes)
        # (b, S, C) through a single matrix product over the feature axis
        L = np.tensordot(X, W[:, :-1, :], axes=([1], [1]))
        L += W[:, -1, :][None, :, :]
        m = L.max(axis=2)
        true = L[np.arange(len(y)), :, y]
        L -= m[:, :, None]
        np.exp(L, out=L)
        lse = np.log(L.sum(axis=2))
        lse += m
        lse -= true
        return lse.mean(axis=0)

    def accuracy(self, w: ParamVector, X: np.ndarray, y: np.ndarray) -> float:
        """Fraction of correct argmax predictions, in percent."""
        pred = np.argmax(self.logits(w, X), axis=1)
        return 100.0 * float(np.mean(pred == y))


class QuadraticModel:
    """F(w) = (lam / 2) * ||w - w_star||^2; data-free, exact gradient."""

    def __init__(self, lam: float, w_star: np.ndarray):
        if lam <= 0:
            raise ValueError("curvature must be positive")
        self.lam = float(lam)
        self.w_star = np.asarray(w_star, dtype=np.float64)
        self.dimension = len(self.w_star)

    def eval(self, w: ParamVector, batch: Batch = None) -> float:
        diff = w - self.w_star
        return 0.5 * self.lam * float(np.dot(diff, diff))

    def grad(self, w: ParamVector, batch: Batch = None) -> ParamVector:
        return self.lam * (w - self.w_star)

    def loss_batch_multi(self, variants: np.ndarray, batch: Batch = None) -> np.ndarray:
        diff = variants - self.w_star[None, :]
        return 0.5 * self.lam * np.einsum("sd,sd->s", diff, diff)
