"""Interactive annotation session: suggest -> human feedback -> datastore insert
-> per-batch coordinate-descent updates of the model, the metric, and the gate.

The final suggestion for a probabilistic model is the convex blend
lambda * f + (1 - lambda) * g; for discrete models lambda is binarized and
routes to exactly one of the two.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import gating, knn_store
from .annotators import LinearSoftmaxModel, Prediction
from .corpus import Example, LabelSpace
from .errors import DimensionError
from .knn_store import Datastore, Entry, MetricParams, NeighborSet

ABLATIONS = ("full", "no_knn", "no_f", "const_lambda")
LAMBDA_MODES = ("continuous", "binary")
ORDERINGS = ("random", "active")
E_FLAG_MODES = ("recompute", "stored")


@dataclass
class SessionConfig:
    k: int = 20
    capacity: int = 1000
    eviction: str = "class_similar"
    batch_size: int = 32
    lr_f: float = 0.1
    lr_g: float = 0.01
    lr_gate: float = 0.01
    epochs: int = 1
    lambda_mode: str = "continuous"
    ablation: str = "full"
    const_lambda: float | None = None
    ordering: str = "random"
    seed: int = 0
    e_flag_mode: str = "recompute"
    hidden1: int = 32
    hidden2: int = 16
    dropout: float = 0.1
    tau: float = 1.0
    gumbel_noise: bool = True
    replay_history: bool = False

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"unknown lambda mode {self.lambda_mode!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.e_flag_mode not in E_FLAG_MODES:
            raise ValueError(f"unknown e-flag mode {self.e_flag_mode!r}")
        if self.eviction not in knn_store.EVICTION_STRATEGIES:
            raise ValueError(f"unknown eviction strategy {self.eviction!r}")
        if self.ablation == "const_lambda":
            if self.const_lambda is None or not 0.0 <= self.const_lambda <= 1.0:
                raise ValueError("const_lambda ablation needs a constant in [0, 1]")
        if self.k <= 0 or self.capacity <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("k, capacity, batch_size and epochs must be positive")

    def validate_for_model(self, probabilistic: bool) -> None:
        # Discrete models cannot be blended, so binary routing is forced; a
        # probabilistic model must blend.
        if probabilistic and self.lambda_mode == "binary":
            raise ValueError("binary lambda mode requires a discrete annotation model")
        if not probabilistic and self.lambda_mode == "continuous":
            raise ValueError("discrete annotation models require binary lambda mode")


@dataclass
class Suggestion:
    example_id: str
    f_pred: Prediction
    g_pred: np.ndarray | None
    lam: float
    final: np.ndarray | int
    suggested_class: int
    neighbors: NeighborSet | None = None


@dataclass
class FeedbackRecord:
    """Per-suggestion trace used for diagnostics and reporting."""

    example_id: str
    lam: float
    suggested_class: int
    f_class: int
    g_class: int | None
    human_label: int
    accepted: bool


class SessionState:
    """Single-writer annotation session over one corpus and one model."""

    def __init__(self, model, label_space: LabelSpace, dim: int, config: SessionConfig):
        config.validate_for_model(model.probabilistic)
        self.model = model
        self.label_space = label_space
        self.dim = dim
        self.config = config
        self.round = 0
        self.total = 0
        self.correct = 0
        self.store = Datastore(config.capacity, dim, label_space.num_classes,
                               eviction=config.eviction)
        self.metric = MetricParams.ones(dim, lr=config.lr_g, tau=config.tau)
        seeds = np.random.SeedSequence(config.seed).spawn(2)
        self.gate = gating.GatingNet(config.k, hidden1=config.hidden1,
                                     hidden2=config.hidden2, lr=config.lr_gate,
                                     dropout=config.dropout, seed=seeds[0])
        self.gumbel_rng = np.random.default_rng(seeds[1])
        self._pending: dict[str, tuple[Suggestion, Example]] = {}
        self._buffer: list[tuple[np.ndarray, int, int]] = []
        self._replay: list[tuple[np.ndarray, int]] = []
        self.lambdas: list[float] = []
        self.history: list[FeedbackRecord] = []
        self.last_report: dict | None = None

    # -- suggestion path ---------------------------------------------------

    def _e_flags(self, neighbors: NeighborSet) -> np.ndarray:
        """Whether the annotation model is right on each retrieved neighbor.

        Recomputed against the live model when it can batch-predict locally;
        external annotators fall back to the flags stored at annotation time,
        which avoids k remote calls per query.
        """
        if self.config.e_flag_mode == "stored" or not hasattr(self.model, "predict_classes"):
            return neighbors.stored_flags
        preds = self.model.predict_classes(neighbors.features)
        return preds == neighbors.labels

    def _blend(self, f_pred: Prediction, g_probs: np.ndarray | None, lam: float):
        """Combine the two predictions per the configured lambda mode."""
        if self.config.lambda_mode == "binary":
            if g_probs is None or gating.binarize(lam) == 1:
                final = f_pred.probs if f_pred.probs is not None else f_pred.class_idx
                suggested = f_pred.class_idx
            else:
                final = g_probs
                suggested = int(np.argmax(g_probs))
            return final, suggested
        f_probs = f_pred.probs
        if g_probs is None:
            final = f_probs
        else:
            final = lam * f_probs + (1.0 - lam) * g_probs
        return final, int(np.argmax(final))

    def suggest(self, example: Example) -> Suggestion:
        feature = np.asarray(example.feature, dtype=np.float64)
        if feature.shape != (self.dim,):
            raise DimensionError(f"example dim {feature.shape} != session dim {self.dim}")
        cfg = self.config
        f_pred = self.model.predict(example)

        neighbors = None
        g_probs = None
        if cfg.ablation == "no_knn" or self.store.size == 0:
            lam = 1.0
        elif cfg.ablation == "no_f":
            neighbors = knn_store.retrieve(self.store, self.metric, feature, cfg.k)
            g_probs = knn_store.infer_from_neighbors(neighbors, self.store.num_classes)
            lam = 0.0
        elif cfg.ablation == "const_lambda":
            neighbors = knn_store.retrieve(self.store, self.metric, feature, cfg.k)
            g_probs = knn_store.infer_from_neighbors(neighbors, self.store.num_classes)
            lam = float(cfg.const_lambda)
        else:
            neighbors = knn_store.retrieve(self.store, self.metric, feature, cfg.k)
            g_probs = knn_store.infer_from_neighbors(neighbors, self.store.num_classes)
            sig = gating.build_gating_input(neighbors, self._e_flags(neighbors), cfg.k)
            lam = gating.gate_forward(self.gate, sig)

        final, suggested = self._blend(f_pred, g_probs, lam)
        suggestion = Suggestion(example_id=example.id, f_pred=f_pred, g_pred=g_probs,
                                lam=lam, final=final, suggested_class=suggested,
                                neighbors=neighbors)
        self._pending[example.id] = (suggestion, example)
        return suggestion

    # -- feedback path -----------------------------------------------------

    def feedback(self, suggestion: Suggestion, human_label: int) -> bool:
        """Record the human decision; returns True when it completed a round."""
        if not 0 <= human_label < self.label_space.num_classes:
            raise ValueError(f"label {human_label} out of range")
        pending = self._pending.pop(suggestion.example_id, None)
        if pending is None or pending[0] is not suggestion:
            raise KeyError(f"unknown or stale suggestion {suggestion.example_id!r}")
        _, example = pending
        feature = np.asarray(example.feature, dtype=np.float64)

        accepted = suggestion.suggested_class == human_label
        self.total += 1
        if accepted:
            self.correct += 1
        self.lambdas.append(suggestion.lam)
        g_class = int(np.argmax(suggestion.g_pred)) if suggestion.g_pred is not None else None
        self.history.append(FeedbackRecord(
            example_id=example.id, lam=suggestion.lam,
            suggested_class=suggestion.suggested_class,
            f_class=suggestion.f_pred.class_idx, g_class=g_class,
            human_label=human_label, accepted=accepted,
        ))

        knn_store.insert(self.store, Entry(
            feature=feature, label=human_label,
            suggest_correct=suggestion.f_pred.class_idx == human_label,
        ))
        self._buffer.append((feature, human_label, suggestion.f_pred.class_idx))
        if len(self._buffer) >= self.config.batch_size:
            self.train_round()
            return True
        return False

    # -- training ----------------------------------------------------------

    def _gate_targets(self, features: np.ndarray, labels: np.ndarray,
                      f_classes: np.ndarray) -> np.ndarray:
        """1 where the (updated) annotation model is right, else 0.

        External annotators cannot be re-queried cheaply, so their targets use
        the prediction recorded at suggestion time (the model is frozen, so
        both agree anyway).
        """
        if hasattr(self.model, "predict_classes"):
            return (self.model.predict_classes(features) == labels).astype(np.float64)
        return (f_classes == labels).astype(np.float64)

    def train_round(self) -> dict:
        """Coordinate-descent round: model step, metric step, then gate step
        with targets from the freshly updated model. Repeats per epoch."""
        if not self._buffer:
            raise ValueError("empty buffer")
        cfg = self.config
        features = np.stack([b[0] for b in self._buffer])
        labels = np.array([b[1] for b in self._buffer], dtype=np.int64)
        f_classes = np.array([b[2] for b in self._buffer], dtype=np.int64)
        if cfg.replay_history:
            self._replay.extend((f, y) for f, y in zip(features, labels))
            train_x = np.stack([r[0] for r in self._replay])
            train_y = np.array([r[1] for r in self._replay], dtype=np.int64)
        else:
            train_x, train_y = features, labels

        report = {"f_loss": None, "metric_loss": None, "gate_loss": None}
        for _ in range(cfg.epochs):
            if self.model.trainable and cfg.ablation != "no_f":
                report["f_loss"] = self.model.update(train_x, train_y)
            if cfg.ablation != "no_knn":
                if self.store.size >= 2:
                    report["metric_loss"] = knn_store.update_metric(
                        self.metric, self.store, features, labels,
                        rng=self.gumbel_rng, noise=cfg.gumbel_noise)
                if cfg.ablation == "full":
                    sigs = []
                    for x in features:
                        neigh = knn_store.retrieve(self.store, self.metric, x, cfg.k)
                        sigs.append(gating.build_gating_input(
                            neigh, self._e_flags(neigh), cfg.k))
                    targets = self._gate_targets(features, labels, f_classes)
                    report["gate_loss"] = gating.gate_update(
                        self.gate, np.stack(sigs), targets)
        self.round += 1
        self._buffer.clear()
        self._pending.clear()
        self.last_report = report
        return report

    def mca(self) -> float:
        """Cumulative fraction of suggestions the human accepted unchanged."""
        if self.total == 0:
            raise ValueError("no suggestions yet")
        return self.correct / self.total

    def lambda_histogram(self, bins: int = 10) -> list[int]:
        counts, _ = np.histogram(self.lambdas, bins=bins, range=(0.0, 1.0))
        return counts.tolist()


def save_checkpoint(state: SessionState, path, corpus_ref: str = "") -> None:
    """Persist config, counters, datastore, and learnable parameters.

    Pending (un-fed-back) suggestions are dropped; the training buffer and rng
    streams are kept so a resumed session continues deterministically.
    """
    model_params = None
    if isinstance(state.model, LinearSoftmaxModel):
        model_params = {"W": state.model.W.tolist(), "b": state.model.b.tolist(),
                        "lr": state.model.lr}
    blob = {
        "corpus_ref": corpus_ref,
        "config": asdict(state.config),
        "classes": list(state.label_space.classes),
        "dim": state.dim,
        "round": state.round,
        "total": state.total,
        "correct": state.correct,
        "lambdas": state.lambdas,
        "w_knn": state.metric.w_knn.tolist(),
        "model": model_params,
        "gate": state.gate.to_json(),
        "gate_rng": state.gate.rng.bit_generator.state,
        "gumbel_rng": state.gumbel_rng.bit_generator.state,
        "buffer": [{"feature": f.tolist(), "label": int(y), "f_class": int(c)}
                   for f, y, c in state._buffer],
        "entries": [{"feature": e.feature.tolist(), "label": e.label,
                     "suggest_correct": e.suggest_correct, "seq": e.seq}
                    for e in state.store.entries()],
        "next_seq": state.store.next_seq,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)


def load_checkpoint(path, model=None) -> SessionState:
    """Rebuild a session from a checkpoint; pass a model for external kinds."""
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    config = SessionConfig(**blob["config"])
    label_space = LabelSpace(tuple(blob["classes"]))
    if model is None:
        if blob["model"] is None:
            raise ValueError("checkpoint has no built-in model; supply one")
        model = LinearSoftmaxModel(label_space.num_classes, blob["dim"],
                                   lr=blob["model"]["lr"])
        model.W = np.asarray(blob["model"]["W"], dtype=np.float64)
        model.b = np.asarray(blob["model"]["b"], dtype=np.float64)
    state = SessionState(model, label_space, blob["dim"], config)
    state.round = blob["round"]
    state.total = blob["total"]
    state.correct = blob["correct"]
    state.lambdas = list(blob["lambdas"])
    state.metric.w_knn = np.asarray(blob["w_knn"], dtype=np.float64)
    state.gate = gating.GatingNet.from_json(blob["gate"])
    state.gate.rng = np.random.default_rng()
    state.gate.rng.bit_generator.state = blob["gate_rng"]
    state.gumbel_rng = np.random.default_rng()
    state.gumbel_rng.bit_generator.state = blob["gumbel_rng"]
    for rec in blob["entries"]:
        knn_store.insert(state.store, Entry(
            feature=np.asarray(rec["feature"], dtype=np.float64),
            label=rec["label"], suggest_correct=rec["suggest_correct"]))
        state.store._seqs[state.store.size - 1] = rec["seq"]
    state.store.next_seq = blob["next_seq"]
    state._buffer = [(np.asarray(b["feature"], dtype=np.float64), b["label"], b["f_class"])
                     for b in blob["buffer"]]
    return state
