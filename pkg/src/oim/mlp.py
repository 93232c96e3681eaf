"""Small feedforward network for nonlinear outcome surfaces.

Three ReLU hidden layers and a sigmoid (classification) or identity
(regression) output, trained by mini-batch SGD with momentum.  Backpropagation
is implemented directly so gradients can be checked against finite
differences.  When the protected attribute is included it enters as one extra
input coordinate appended after the features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import BINARY, Dataset
from .errors import ConfigError, DataError, TrainingDivergenceError, UsageError
from .glm import NLL, PROB_CLAMP, QUADRATIC, mean_nll
from .synthdata import sigmoid

SIGMOID = "sigmoid"
IDENTITY_OUT = "identity"


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, int, int] = (16, 16, 16)
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if len(self.hidden) != 3 or any(h < 1 for h in self.hidden):
            raise ConfigError("exactly three positive hidden widths are required")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("batch size and learning rate must be positive")


def forward(weights, biases, X: np.ndarray):
    """Forward pass; returns (layer activations, output pre-activation)."""
    activations = [np.asarray(X, dtype=float)]
    a = activations[0]
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        activations.append(a)
    eta = (a @ weights[-1] + biases[-1]).ravel()
    return activations, eta


def batch_loss(eta: np.ndarray, y: np.ndarray, output: str) -> float:
    # Overflow to inf is expected on divergence and handled by the caller.
    with np.errstate(over="ignore"):
        if output == SIGMOID:
            return mean_nll(eta, y)
        return float(np.mean((eta - y) ** 2))


def batch_gradients(weights, biases, X: np.ndarray, y: np.ndarray, output: str):
    """Mean-loss gradients for every weight matrix and bias vector."""
    activations, eta = forward(weights, biases, X)
    n = X.shape[0]
    if output == SIGMOID:
        delta = (sigmoid(eta) - y) / n
    else:
        delta = 2.0 * (eta - y) / n
    delta = delta[:, None]
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (activations[i] > 0)
    return grads_w, grads_b


def input_gradient(weights, biases, x: np.ndarray, output: str) -> np.ndarray:
    """Gradient of the scalar network output with respect to one input row."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    activations, eta = forward(weights, biases, x)
    if output == SIGMOID:
        p = float(sigmoid(eta)[0])
        scale = p * (1.0 - p)
    else:
        scale = 1.0
    v = weights[-1][:, 0] * scale
    for i in range(len(weights) - 2, -1, -1):
        v = weights[i] @ (v * (activations[i + 1][0] > 0))
    return v


@dataclass(frozen=True)
class MlpModel:
    weights: tuple
    biases: tuple
    output: str
    protected_levels: tuple[int, ...] = ()
    train_loss: float = float("nan")
    epoch_losses: tuple[float, ...] = field(default=())

    @property
    def loss(self) -> str:
        return NLL if self.output == SIGMOID else QUADRATIC

    @property
    def uses_protected(self) -> bool:
        return bool(self.protected_levels)

    def _inputs(self, X: np.ndarray, z) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.uses_protected:
            if z is None:
                raise UsageError("model was trained with the protected attribute; pass z")
            zcol = np.broadcast_to(np.asarray(z, dtype=float), (X.shape[0],))
            X = np.column_stack([X, zcol])
        elif z is not None:
            raise UsageError("model was trained without the protected attribute; omit z")
        if X.shape[1] != self.weights[0].shape[0]:
            raise DataError(
                f"model expects {self.weights[0].shape[0]} inputs, got {X.shape[1]}"
            )
        return X

    def predict(self, X: np.ndarray, z=None) -> np.ndarray:
        single = np.asarray(X).ndim == 1
        _, eta = forward(self.weights, self.biases, self._inputs(X, z))
        if self.output == SIGMOID:
            out = np.clip(sigmoid(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
        else:
            out = eta
        return float(out[0]) if single else out


def mlp_predict(model: MlpModel, X: np.ndarray, z=None) -> np.ndarray:
    return model.predict(X, z)


def _glorot_init(dims, rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def fit_mlp(
    train: Dataset, config: MlpConfig | None = None, include_protected: bool = False
) -> MlpModel:
    """Train by mini-batch SGD with momentum; deterministic given config.seed.

    Raises :class:`TrainingDivergenceError` with the epoch index if the loss
    becomes non-finite.
    """
    config = config or MlpConfig()
    output = SIGMOID if train.outcome == BINARY else IDENTITY_OUT
    levels = train.levels if include_protected else ()
    X = train.X
    if include_protected:
        X = np.column_stack([X, train.z.astype(float)])
    y = train.y

    rng = np.random.default_rng(config.seed)
    dims = [X.shape[1], *config.hidden, 1]
    weights, biases = _glorot_init(dims, rng)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(train.n)
        losses = []
        for start in range(0, train.n, config.batch_size):
            rows = order[start : start + config.batch_size]
            xb, yb = X[rows], y[rows]
            _, eta = forward(weights, biases, xb)
            loss = batch_loss(eta, yb, output)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"training loss became non-finite at epoch {epoch}", epoch=epoch
                )
            losses.append(loss)
            grads_w, grads_b = batch_gradients(weights, biases, xb, yb, output)
            for i in range(len(weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * grads_w[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * grads_b[i]
                weights[i] = weights[i] + vel_w[i]
                biases[i] = biases[i] + vel_b[i]
        epoch_losses.append(float(np.mean(losses)))

    _, eta = forward(weights, biases, X)
    final_loss = batch_loss(eta, y, output)
    if not np.isfinite(final_loss):
        raise TrainingDivergenceError(
            f"training loss became non-finite at epoch {config.epochs - 1}",
            epoch=config.epochs - 1,
        )
    return MlpModel(
        weights=tuple(weights),
        biases=tuple(biases),
        output=output,
        protected_levels=levels,
        train_loss=final_loss,
        epoch_losses=tuple(epoch_losses),
    )
