"""Dataset and embedding ingestion.

Turns JSONL records into fixed-dimension feature vectors and batches. Records
may arrive with precomputed features or with raw text that is embedded later
via a plain-text embedding table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmbedError, ParseError


@dataclass(frozen=True)
class LabelSpace:
    """Ordered set of class names; a class's index is its position."""

    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("label space needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None


@dataclass
class Example:
    """One item to annotate: a feature vector and/or its source text."""

    id: str
    text: str | None = None
    feature: np.ndarray | None = None
    gold_label: int | None = None


@dataclass
class Corpus:
    examples: list[Example]
    label_space: LabelSpace | None
    dim: int | None = None

    def __len__(self) -> int:
        return len(self.examples)

    def feature_matrix(self) -> np.ndarray:
        """Stack all features into an (N, dim) array; fails on feature-less records."""
        missing = [ex.id for ex in self.examples if ex.feature is None]
        if missing:
            raise EmbedError(f"examples without features: {missing[:5]}")
        return np.stack([ex.feature for ex in self.examples])


def load_examples(path, fmt: str = "jsonl", classes=None) -> Corpus:
    """Load a corpus from a JSONL file.

    Each line is ``{"id": str, "text": str?, "feature": [num]?, "label": str?}``.
    Records must carry an id plus either a feature or text. When ``classes`` is
    not given the label space is the sorted set of label names in the file (or
    None if the file is unlabeled).
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported format {fmt!r}")
    examples = []
    raw_labels = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(record, dict) or "id" not in record:
                raise ParseError("record must be an object with an 'id'", line=lineno)
            rec_id = str(record["id"])
            text = record.get("text")
            feature = record.get("feature")
            if feature is None and text is None:
                raise ParseError(f"record {rec_id!r} has neither feature nor text", line=lineno)
            if feature is not None:
                feature = np.asarray(feature, dtype=np.float64)
                if feature.ndim != 1:
                    raise ParseError(f"record {rec_id!r} feature is not a flat vector", line=lineno)
                if not np.all(np.isfinite(feature)):
                    raise ParseError(f"record {rec_id!r} has non-finite feature values", line=lineno)
                if dim is None:
                    dim = feature.shape[0]
                elif feature.shape[0] != dim:
                    raise DimensionError(
                        f"record {rec_id!r} has feature length {feature.shape[0]}, expected {dim}"
                    )
            examples.append(Example(id=rec_id, text=text, feature=feature))
            raw_labels.append(record.get("label"))
    if not examples:
        raise ParseError("no examples in file")

    if classes is not None:
        label_space = LabelSpace(tuple(classes))
    else:
        seen = sorted({lab for lab in raw_labels if lab is not None})
        label_space = LabelSpace(tuple(seen)) if len(seen) >= 2 else None
    if label_space is not None:
        for ex, lab in zip(examples, raw_labels):
            if lab is not None:
                ex.gold_label = label_space.index(lab)
    return Corpus(examples=examples, label_space=label_space, dim=dim)


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus back to JSONL; features round-trip bit-for-bit."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in corpus.examples:
            record = {"id": ex.id}
            if ex.text is not None:
                record["text"] = ex.text
            if ex.feature is not None:
                record["feature"] = [float(v) for v in ex.feature]
            if ex.gold_label is not None and corpus.label_space is not None:
                record["label"] = corpus.label_space.classes[ex.gold_label]
            fh.write(json.dumps(record) + "\n")


def load_embedding_table(path) -> dict[str, np.ndarray]:
    """Parse a plain-text table of ``token v1 ... vE`` lines."""
    table = {}
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if not values:
                raise ParseError(f"token {token!r} has no vector", line=lineno)
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"token {token!r}: {exc}", line=lineno) from exc
            if width is None:
                width = vec.shape[0]
            elif vec.shape[0] != width:
                raise ParseError(
                    f"token {token!r} has width {vec.shape[0]}, expected {width}", line=lineno
                )
            table[token] = vec
    if not table:
        raise ParseError("empty embedding table")
    return table


def embed_corpus(corpus: Corpus, table: dict[str, np.ndarray], mode: str) -> Corpus:
    """Fill in missing features from text using an embedding table.

    pair_concat concatenates the vectors of a two-token text (unknown tokens
    become zero vectors); token_average takes the mean over the known tokens
    and fails when none are known. Records that already carry a feature are
    left untouched.
    """
    if mode not in ("pair_concat", "token_average"):
        raise ValueError(f"unknown embed mode {mode!r}")
    width = len(next(iter(table.values())))
    zero = np.zeros(width, dtype=np.float64)
    dim = corpus.dim
    for ex in corpus.examples:
        if ex.feature is not None:
            continue
        tokens = (ex.text or "").split()
        if mode == "pair_concat":
            if len(tokens) != 2:
                raise EmbedError(f"example {ex.id!r}: pair_concat needs exactly 2 tokens, got {len(tokens)}")
            feature = np.concatenate([table.get(tokens[0], zero), table.get(tokens[1], zero)])
        else:
            known = [table[t] for t in tokens if t in table]
            if not known:
                raise EmbedError(f"example {ex.id!r}: no known tokens to average")
            feature = np.mean(known, axis=0)
        if dim is None:
            dim = feature.shape[0]
        elif feature.shape[0] != dim:
            raise DimensionError(
                f"example {ex.id!r} embeds to length {feature.shape[0]}, expected {dim}"
            )
        ex.feature = feature
    corpus.dim = dim
    return corpus


def make_batches(corpus: Corpus, batch_size: int, order) -> list[list[Example]]:
    """Slice the permuted example list into consecutive batches (last may be short)."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    order = np.asarray(order)
    n = len(corpus.examples)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("order is not a permutation of 0..N-1")
    permuted = [corpus.examples[i] for i in order]
    return [permuted[i : i + batch_size] for i in range(0, n, batch_size)]
