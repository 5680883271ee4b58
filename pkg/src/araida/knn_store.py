"""Capacity-bounded datastore of human-labeled examples with weighted KNN inference.

Distances are computed under a learned per-dimension scaling (diagonal metric).
Inference averages label-smoothed neighbor labels weighted by inverse distance.
The metric is trained by gradient descent on a softmax-relaxed version of the
retrieval (optionally perturbed with Gumbel noise), since hard top-k selection
has no gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyStoreError

DIST_EPS = 1e-8
W_MIN = 1e-6

EVICTION_STRATEGIES = ("class_similar", "class_dissimilar", "fifo", "class_fifo")


@dataclass
class Entry:
    """One human-verified example: feature, final label, and whether the
    annotation model's suggestion was correct at annotation time."""

    feature: np.ndarray
    label: int
    suggest_correct: bool
    seq: int = -1


@dataclass
class MetricParams:
    """Per-dimension positive scaling of the distance, plus training knobs."""

    w_knn: np.ndarray
    lr: float = 0.01
    tau: float = 1.0

    def __post_init__(self):
        self.w_knn = np.asarray(self.w_knn, dtype=np.float64)
        if np.any(self.w_knn <= 0):
            raise ValueError("w_knn entries must be positive")
        if self.lr <= 0 or self.tau <= 0:
            raise ValueError("lr and tau must be positive")

    @classmethod
    def ones(cls, dim: int, lr: float = 0.01, tau: float = 1.0) -> "MetricParams":
        return cls(w_knn=np.ones(dim, dtype=np.float64), lr=lr, tau=tau)


class NeighborSet:
    """Up to k (entry, distance) pairs in ascending distance order."""

    def __init__(self, store: "Datastore", indices: np.ndarray, distances: np.ndarray):
        self._store = store
        self.indices = indices
        self.distances = distances

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def labels(self) -> np.ndarray:
        return self._store._labels[self.indices]

    @property
    def features(self) -> np.ndarray:
        return self._store._features[self.indices]

    @property
    def seqs(self) -> np.ndarray:
        return self._store._seqs[self.indices]

    @property
    def stored_flags(self) -> np.ndarray:
        return self._store._flags[self.indices]

    def entries(self) -> list[Entry]:
        return [self._store._entry_at(i) for i in self.indices]


class Datastore:
    """Fixed-capacity memory of entries with a configurable eviction strategy.

    Features live in a preallocated matrix so retrieval is one vectorized
    scan. Row order is not meaningful; ordering guarantees come from the
    insertion counter ``seq``.
    """

    def __init__(self, capacity: int, dim: int, num_classes: int,
                 eviction: str = "class_similar"):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if eviction not in EVICTION_STRATEGIES:
            raise ValueError(f"unknown eviction strategy {eviction!r}")
        self.capacity = capacity
        self.dim = dim
        self.num_classes = num_classes
        self.eviction = eviction
        self.size = 0
        self.next_seq = 0
        self.class_counts = np.zeros(num_classes, dtype=np.int64)
        self._features = np.zeros((capacity, dim), dtype=np.float64)
        self._labels = np.zeros(capacity, dtype=np.int64)
        self._flags = np.zeros(capacity, dtype=bool)
        self._seqs = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    def _entry_at(self, row: int) -> Entry:
        return Entry(
            feature=self._features[row].copy(),
            label=int(self._labels[row]),
            suggest_correct=bool(self._flags[row]),
            seq=int(self._seqs[row]),
        )

    def entries(self) -> list[Entry]:
        return [self._entry_at(i) for i in range(self.size)]

    def features(self) -> np.ndarray:
        return self._features[: self.size]

    def labels(self) -> np.ndarray:
        return self._labels[: self.size]


def distance(metric: MetricParams, x: np.ndarray, a: np.ndarray) -> float:
    """Weighted Euclidean distance, clamped away from zero."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x.shape != a.shape or x.shape != metric.w_knn.shape:
        raise DimensionError("distance operands must share the metric's dimension")
    return float(max(DIST_EPS, np.linalg.norm(metric.w_knn * (x - a))))


def _all_distances(store: Datastore, metric: MetricParams, x: np.ndarray) -> np.ndarray:
    """Clamped distances from x to every live entry (vectorized full scan)."""
    diffs = store.features() - x
    raw = np.sqrt(np.sum((metric.w_knn * diffs) ** 2, axis=1))
    return np.maximum(DIST_EPS, raw)


def retrieve(store: Datastore, metric: MetricParams, x: np.ndarray, k: int) -> NeighborSet:
    """Exact k nearest entries by full scan; distance ties go to the lower seq."""
    if store.size == 0:
        raise EmptyStoreError("datastore is empty")
    if k <= 0:
        raise ValueError("k must be positive")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (store.dim,):
        raise DimensionError(f"query dim {x.shape} != store dim {store.dim}")
    dists = _all_distances(store, metric, x)
    order = np.lexsort((store._seqs[: store.size], dists))[: min(k, store.size)]
    return NeighborSet(store, order, dists[order])


def smooth_label(label: int, num_classes: int) -> np.ndarray:
    """One-hot label mixed toward uniform with coefficient 1 - 1/C."""
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    alpha = 1.0 - 1.0 / num_classes
    vec = np.full(num_classes, alpha / num_classes, dtype=np.float64)
    vec[label] += 1.0 - alpha
    return vec


def _smoothed_label_matrix(labels: np.ndarray, num_classes: int) -> np.ndarray:
    alpha = 1.0 - 1.0 / num_classes
    mat = np.full((labels.shape[0], num_classes), alpha / num_classes, dtype=np.float64)
    mat[np.arange(labels.shape[0]), labels] += 1.0 - alpha
    return mat


def infer_from_neighbors(neighbors: NeighborSet, num_classes: int) -> np.ndarray:
    """Inverse-distance weighted average of smoothed neighbor labels."""
    weights = 1.0 / neighbors.distances
    weights = weights / weights.sum()
    return weights @ _smoothed_label_matrix(neighbors.labels, num_classes)


def knn_infer(store: Datastore, metric: MetricParams, x: np.ndarray, k: int) -> np.ndarray:
    """Nonparametric class distribution for x from its k nearest entries."""
    return infer_from_neighbors(retrieve(store, metric, x, k), store.num_classes)


def _majority_class(store: Datastore) -> int:
    # np.argmax returns the lowest index among ties.
    return int(np.argmax(store.class_counts))


def _remove_row(store: Datastore, row: int) -> Entry:
    removed = store._entry_at(row)
    last = store.size - 1
    if row != last:
        store._features[row] = store._features[last]
        store._labels[row] = store._labels[last]
        store._flags[row] = store._flags[last]
        store._seqs[row] = store._seqs[last]
    store.size = last
    store.class_counts[removed.label] -= 1
    return removed


def evict(store: Datastore, strategy: str | None = None) -> Entry:
    """Remove and return one entry according to the maintenance strategy.

    class_similar drops the majority-class entry closest to that class's
    prototype (mean feature); class_dissimilar drops the farthest one.
    fifo drops the globally oldest entry; class_fifo the oldest within the
    majority class. All ties resolve to the lowest seq.
    """
    if store.size == 0:
        raise EmptyStoreError("cannot evict from an empty datastore")
    strategy = strategy or store.eviction
    if strategy not in EVICTION_STRATEGIES:
        raise ValueError(f"unknown eviction strategy {strategy!r}")
    seqs = store._seqs[: store.size]
    if strategy == "fifo":
        return _remove_row(store, int(np.argmin(seqs)))

    cls = _majority_class(store)
    rows = np.flatnonzero(store._labels[: store.size] == cls)
    if strategy == "class_fifo":
        return _remove_row(store, int(rows[np.argmin(seqs[rows])]))

    prototype = store._features[rows].mean(axis=0)
    dists = np.linalg.norm(store._features[rows] - prototype, axis=1)
    if strategy == "class_similar":
        pick = np.lexsort((seqs[rows], dists))[0]
    else:  # class_dissimilar
        pick = np.lexsort((seqs[rows], -dists))[0]
    return _remove_row(store, int(rows[pick]))


def insert(store: Datastore, entry: Entry) -> Entry | None:
    """Append an entry, evicting one first if the store is at capacity."""
    feature = np.asarray(entry.feature, dtype=np.float64)
    if feature.shape != (store.dim,):
        raise DimensionError(f"entry dim {feature.shape} != store dim {store.dim}")
    if not 0 <= entry.label < store.num_classes:
        raise ValueError(f"label {entry.label} out of range")
    evicted = None
    if store.size >= store.capacity:
        evicted = evict(store)
    row = store.size
    store._features[row] = feature
    store._labels[row] = entry.label
    store._flags[row] = entry.suggest_correct
    store._seqs[row] = store.next_seq
    entry.seq = store.next_seq
    store.next_seq += 1
    store.size += 1
    store.class_counts[entry.label] += 1
    return evicted


def relaxed_infer_loss(metric: MetricParams, store: Datastore, queries: np.ndarray,
                       labels: np.ndarray, gumbel: np.ndarray | None = None):
    """Mean NLL of the softmax-relaxed KNN and its gradient w.r.t. w_knn.

    The hard top-k retrieval is replaced by weights
    softmax(-d(x, a)/tau + gumbel) over every entry, under which the smoothed
    labels are averaged. ``gumbel`` is an optional (Q, N) noise matrix.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = store.size
    q = queries.shape[0]
    w = metric.w_knn
    feats = store.features()

    diffs = queries[:, None, :] - feats[None, :, :]          # (Q, N, D)
    sq = diffs ** 2
    raw = np.sqrt(np.sum((w ** 2) * sq, axis=2))             # (Q, N)
    d = np.maximum(DIST_EPS, raw)
    scores = -d / metric.tau
    if gumbel is not None:
        scores = scores + gumbel
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)                        # (Q, N)

    smoothed = _smoothed_label_matrix(store.labels(), store.num_classes)  # (N, C)
    g = p @ smoothed                                         # (Q, C)
    g_true = g[np.arange(q), labels]
    loss = float(-np.mean(np.log(g_true)))

    # Backprop: loss -> p -> scores -> d -> w.
    dloss_dp = -smoothed[:, labels].T / (q * g_true[:, None])            # (Q, N)
    inner = np.sum(dloss_dp * p, axis=1, keepdims=True)
    dloss_dscores = p * (dloss_dp - inner)
    dloss_dd = -dloss_dscores / metric.tau
    unclamped = raw > DIST_EPS
    dd_dw = np.where(unclamped[:, :, None], w * sq / np.maximum(raw, DIST_EPS)[:, :, None], 0.0)
    grad = np.einsum("qn,qnd->d", dloss_dd, dd_dw)
    return loss, grad


def update_metric(metric: MetricParams, store: Datastore, queries, labels,
                  rng: np.random.Generator | None = None, noise: bool = True) -> float:
    """One gradient step of the relaxed retrieval loss on w_knn.

    Gumbel noise perturbs the relaxed selection when ``noise`` is on and an
    rng is supplied; w_knn is clamped strictly positive after the step.
    Returns the pre-step loss.
    """
    if store.size < 2:
        raise EmptyStoreError("metric update needs at least 2 entries")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if queries.shape[0] == 0:
        raise ValueError("empty batch")
    if queries.shape[0] != labels.shape[0]:
        raise ValueError("queries and labels disagree in length")
    gumbel = None
    if noise and rng is not None:
        u = np.clip(rng.random((queries.shape[0], store.size)), 1e-12, 1.0 - 1e-12)
        gumbel = -np.log(-np.log(u))
    loss, grad = relaxed_infer_loss(metric, store, queries, labels, gumbel)
    metric.w_knn = np.maximum(W_MIN, metric.w_knn - metric.lr * grad)
    return loss


def export_entries(store: Datastore, classes, path) -> None:
    """Dump live entries as JSONL (feature, label name, suggest_correct, seq)."""
    classes = list(classes)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in store.entries():
            fh.write(json.dumps({
                "feature": [float(v) for v in entry.feature],
                "label": classes[entry.label],
                "suggest_correct": entry.suggest_correct,
                "seq": entry.seq,
            }) + "\n")


def import_entries(path, classes, capacity: int, dim: int,
                   eviction: str = "class_similar") -> Datastore:
    """Rebuild a datastore from an exported JSONL snapshot."""
    classes = list(classes)
    store = Datastore(capacity, dim, len(classes), eviction=eviction)
    max_seq = -1
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entry = Entry(
                feature=np.asarray(rec["feature"], dtype=np.float64),
                label=classes.index(rec["label"]),
                suggest_correct=bool(rec["suggest_correct"]),
            )
            insert(store, entry)
            store._seqs[store.size - 1] = int(rec["seq"])
            max_seq = max(max_seq, int(rec["seq"]))
    store.next_seq = max_seq + 1
    return store
