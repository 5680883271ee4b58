"""Annotation models: the side of the loop that proposes labels.

Two flavors: a built-in online linear-softmax classifier (probabilistic,
trainable) and an adapter for an external HTTP annotator that returns
discrete labels and is never updated locally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import requests

from .corpus import Example
from .errors import DimensionError, ModelUnavailableError, ProtocolError, UnsupportedError

PROBABILISTIC = "probabilistic"
DISCRETE = "discrete"


@dataclass
class Prediction:
    kind: str
    class_idx: int
    probs: np.ndarray | None = None


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


class LinearSoftmaxModel:
    """Softmax classifier trained online with full-batch gradient steps on NLL."""

    probabilistic = True
    trainable = True

    def __init__(self, num_classes: int, dim: int, lr: float = 0.1):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.W = np.zeros((num_classes, dim), dtype=np.float64)
        self.b = np.zeros(num_classes, dtype=np.float64)
        self.lr = lr

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.dim:
            raise DimensionError(f"feature dim {features.shape[-1]} != model dim {self.dim}")
        return features @ self.W.T + self.b

    def predict_probs(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))

    def predict_classes(self, features: np.ndarray) -> np.ndarray:
        """Argmax class per row, ties resolved to the lowest index."""
        return np.argmax(self.predict_probs(np.atleast_2d(features)), axis=-1)

    def predict(self, example: Example) -> Prediction:
        return linear_predict(self, example.feature)

    def update(self, features: np.ndarray, labels: np.ndarray) -> float:
        return linear_update(self, features, labels)


def linear_predict(model: LinearSoftmaxModel, feature: np.ndarray) -> Prediction:
    """Softmax prediction for a single feature vector."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 1:
        raise DimensionError("linear_predict expects a single feature vector")
    probs = model.predict_probs(feature)
    return Prediction(kind=PROBABILISTIC, class_idx=int(np.argmax(probs)), probs=probs)


def linear_update(model: LinearSoftmaxModel, features, labels) -> float:
    """One full-batch gradient step on mean NLL; returns the pre-step loss."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if features.shape[0] == 0:
        raise ValueError("empty batch")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree in length")
    n = features.shape[0]
    probs = model.predict_probs(features)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels])))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    model.W -= model.lr * (dlogits.T @ features)
    model.b -= model.lr * dlogits.sum(axis=0)
    return loss


def uncertainty(prediction: Prediction) -> float:
    """Shannon entropy of a probabilistic prediction (0*log0 taken as 0)."""
    if prediction.kind != PROBABILISTIC or prediction.probs is None:
        raise UnsupportedError("cannot estimate uncertainty of a discrete prediction")
    p = prediction.probs
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


@dataclass
class ExternalModelConfig:
    endpoint: str
    timeout: float = 10.0
    retries: int = 2

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


def external_predict(config: ExternalModelConfig, example: Example, classes) -> Prediction:
    """Ask an external annotator for a discrete label.

    POSTs ``{id, text, classes}`` and expects ``{"label": name}`` back. The
    request is retried ``config.retries`` additional times before giving up.
    """
    classes = list(classes)
    payload = {"id": example.id, "text": example.text, "classes": classes}
    last_exc = None
    for _ in range(config.retries + 1):
        try:
            resp = requests.post(config.endpoint, json=payload, timeout=config.timeout)
            resp.raise_for_status()
            break
        except requests.RequestException as exc:
            last_exc = exc
    else:
        raise ModelUnavailableError(f"endpoint {config.endpoint} unavailable: {last_exc}")
    try:
        body = resp.json()
    except (ValueError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"endpoint returned non-JSON body: {exc}") from exc
    label = body.get("label") if isinstance(body, dict) else None
    if label not in classes:
        raise ProtocolError(f"endpoint returned unknown label {label!r}")
    return Prediction(kind=DISCRETE, class_idx=classes.index(label))


class ExternalAnnotationModel:
    """Wraps an external endpoint behind the common annotation-model surface."""

    probabilistic = False
    trainable = False

    def __init__(self, config: ExternalModelConfig, classes):
        self.config = config
        self.classes = list(classes)

    def predict(self, example: Example) -> Prediction:
        return external_predict(self.config, example, self.classes)

    def update(self, features, labels):
        # Frozen remote model: nothing to train locally.
        return None


class DiscreteLinearModel:
    """Linear classifier that trains normally but only ever emits hard labels,
    like an instruction-tuned annotator that returns a class name, not scores."""

    probabilistic = False
    trainable = True

    def __init__(self, num_classes: int, dim: int, lr: float = 0.1):
        self.inner = LinearSoftmaxModel(num_classes, dim, lr=lr)

    def predict(self, example: Example) -> Prediction:
        inner_pred = linear_predict(self.inner, example.feature)
        return Prediction(kind=DISCRETE, class_idx=inner_pred.class_idx)

    def predict_classes(self, features):
        return self.inner.predict_classes(features)

    def update(self, features, labels):
        return self.inner.update(features, labels)
