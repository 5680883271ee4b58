"""Error-aware gating: estimates how reliable the annotation model is per example.

The input signature is the k neighbor distances, signed by whether the
annotation model was right on each neighbor (positive = right). A small
feed-forward net maps that signature to a weight in (0, 1) used to blend or
route between the annotation model and KNN.
"""

from __future__ import annotations

import json

import numpy as np

from .knn_store import NeighborSet

LAMBDA_CLIP = 1e-12


def build_gating_input(neighbors, flags, k: int) -> np.ndarray:
    """Signed-distance signature: +d for neighbors the model got right, -d
    otherwise; zero-padded out to length k when fewer neighbors exist."""
    if isinstance(neighbors, NeighborSet):
        distances = neighbors.distances
    else:
        distances = np.asarray(neighbors, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if distances.shape[0] != flags.shape[0]:
        raise ValueError("one flag per neighbor required")
    if distances.shape[0] > k:
        raise ValueError(f"got {distances.shape[0]} neighbors for k={k}")
    sig = np.zeros(k, dtype=np.float64)
    sig[: distances.shape[0]] = np.where(flags, distances, -distances)
    return sig


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class GatingNet:
    """Three fully-connected layers (k -> h1 -> h2 -> 1), ReLU + dropout on the
    hidden layers, sigmoid output. Dropout only acts during training."""

    def __init__(self, k: int, hidden1: int = 32, hidden2: int = 16,
                 lr: float = 0.01, dropout: float = 0.1, seed=0):
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.k = k
        self.lr = lr
        self.dropout = dropout
        # seed may be an int, a SeedSequence, or a Generator; the same stream
        # then feeds dropout masks during training.
        self.rng = np.random.default_rng(seed)
        self.W1 = self._init_layer(hidden1, k)
        self.b1 = np.zeros(hidden1)
        self.W2 = self._init_layer(hidden2, hidden1)
        self.b2 = np.zeros(hidden2)
        self.W3 = self._init_layer(1, hidden2)
        self.b3 = np.zeros(1)

    def _init_layer(self, fan_out: int, fan_in: int) -> np.ndarray:
        # Zero-mean uniform scaled by 1/sqrt(fan_in).
        bound = 1.0 / np.sqrt(fan_in)
        return self.rng.uniform(-bound, bound, size=(fan_out, fan_in))

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def _forward(self, x: np.ndarray, train: bool):
        """Batch forward pass; returns lambdas plus the cache for backprop."""
        z1 = x @ self.W1.T + self.b1
        a1 = _relu(z1)
        if train and self.dropout > 0.0:
            m1 = (self.rng.random(a1.shape) >= self.dropout) / (1.0 - self.dropout)
        else:
            m1 = None
        h1 = a1 if m1 is None else a1 * m1
        z2 = h1 @ self.W2.T + self.b2
        a2 = _relu(z2)
        if train and self.dropout > 0.0:
            m2 = (self.rng.random(a2.shape) >= self.dropout) / (1.0 - self.dropout)
        else:
            m2 = None
        h2 = a2 if m2 is None else a2 * m2
        z3 = (h2 @ self.W3.T + self.b3).ravel()
        lam = np.clip(_sigmoid(z3), LAMBDA_CLIP, 1.0 - LAMBDA_CLIP)
        cache = (x, z1, m1, h1, z2, m2, h2, lam)
        return lam, cache

    def to_json(self) -> str:
        """Flat parameter array with a shape header, for session resume."""
        shapes = {name: list(getattr(self, name).shape)
                  for name in ("W1", "b1", "W2", "b2", "W3", "b3")}
        flat = np.concatenate([getattr(self, name).ravel()
                               for name in ("W1", "b1", "W2", "b2", "W3", "b3")])
        return json.dumps({"k": self.k, "lr": self.lr, "dropout": self.dropout,
                           "shapes": shapes, "params": flat.tolist()})

    @classmethod
    def from_json(cls, blob: str) -> "GatingNet":
        data = json.loads(blob)
        shapes = data["shapes"]
        net = cls(k=data["k"], hidden1=shapes["W1"][0], hidden2=shapes["W2"][0],
                  lr=data["lr"], dropout=data["dropout"])
        flat = np.asarray(data["params"], dtype=np.float64)
        offset = 0
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            shape = tuple(shapes[name])
            count = int(np.prod(shape))
            setattr(net, name, flat[offset : offset + count].reshape(shape))
            offset += count
        return net


def gate_forward(net: GatingNet, x: np.ndarray) -> float:
    """Deterministic inference pass; dropout off, output strictly inside (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.k,):
        raise ValueError(f"gating input must have length {net.k}")
    lam, _ = net._forward(x[None, :], train=False)
    return float(lam[0])


def gate_forward_batch(net: GatingNet, inputs: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != net.k:
        raise ValueError(f"gating inputs must have width {net.k}")
    lam, _ = net._forward(inputs, train=False)
    return lam


def gate_gradients(net: GatingNet, inputs: np.ndarray, targets: np.ndarray,
                   train: bool = True):
    """MSE loss against {0,1} targets and gradients for all parameters."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = np.asarray(targets, dtype=np.float64).ravel()
    n = x.shape[0]
    lam, (x_, z1, m1, h1, z2, m2, h2, lam_) = net._forward(x, train=train)
    loss = float(np.mean((lam - t) ** 2))

    dz3 = (2.0 * (lam - t) / n) * lam * (1.0 - lam)           # sigmoid grad
    dW3 = dz3[None, :] @ h2
    db3 = np.array([dz3.sum()])
    dh2 = np.outer(dz3, net.W3.ravel())
    if m2 is not None:
        dh2 = dh2 * m2
    dz2 = dh2 * (z2 > 0)
    dW2 = dz2.T @ h1
    db2 = dz2.sum(axis=0)
    dh1 = dz2 @ net.W2
    if m1 is not None:
        dh1 = dh1 * m1
    dz1 = dh1 * (z1 > 0)
    dW1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, [dW1, db1, dW2, db2, dW3, db3]


def gate_update(net: GatingNet, inputs, targets) -> float:
    """One SGD step on mean squared error; dropout active in the forward pass.
    Returns the pre-step loss."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if inputs.shape[0] == 0:
        raise ValueError("empty batch")
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets disagree in length")
    loss, grads = gate_gradients(net, inputs, targets, train=True)
    for param, grad in zip(net.parameters(), grads):
        param -= net.lr * grad
    return loss


def binarize(lam: float) -> int:
    """Route hard: 1 picks the annotation model, 0 picks KNN. Strict > 0.5."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    return 1 if lam > 0.5 else 0
