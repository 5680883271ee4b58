"""Simulated-oracle experiment runner.

Streams a corpus through fresh annotation sessions, lets a simulated oracle
play the human, and reports machine cumulative accuracy (MCA) per prefix
size, plus lambda-split diagnostics and hyperparameter sweeps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotators import DiscreteLinearModel, LinearSoftmaxModel
from .corpus import Corpus, Example, LabelSpace
from .errors import UnsupportedError
from .session import SessionConfig, SessionState

DEFAULT_SIZES = (1000, 2000, 3000, 4000, 5000)

VARIANTS = ("full", "no_knn", "no_f")  # plus "const:<value>" strings


@dataclass
class Oracle:
    """Simulated human: perfect replay of gold labels, or a noisy crowd of
    annotators that each err with an individual latent probability and are
    aggregated by majority vote."""

    kind: str
    p_errors: np.ndarray | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        if self.kind not in ("perfect", "noisy_crowd"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "noisy_crowd":
            self.p_errors = np.asarray(self.p_errors, dtype=np.float64)
            if np.any(self.p_errors < 0) or np.any(self.p_errors >= 1):
                raise ValueError("annotator error rates must be in [0, 1)")


def make_oracle(kind: str, seed: int = 0, annotators: int = 10,
                p_max: float = 0.3, p_errors=None) -> Oracle:
    """Build an oracle; noisy-crowd error rates are sampled once per run from
    uniform(0, p_max) unless given explicitly."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if kind == "perfect":
        return Oracle(kind="perfect", rng=rng)
    if p_errors is None:
        p_errors = rng.uniform(0.0, p_max, size=annotators)
    return Oracle(kind="noisy_crowd", p_errors=p_errors, rng=rng)


def oracle_label(oracle: Oracle, example: Example, num_classes: int) -> int:
    """The oracle's answer for one example."""
    if example.gold_label is None:
        raise ValueError(f"example {example.id!r} has no gold label")
    gold = example.gold_label
    if oracle.kind == "perfect":
        return gold
    votes = np.zeros(num_classes, dtype=np.int64)
    for p_err in oracle.p_errors:
        u = oracle.rng.random()
        if u <= p_err:
            wrong = int(oracle.rng.integers(num_classes - 1))
            votes[wrong if wrong < gold else wrong + 1] += 1
        else:
            votes[gold] += 1
    return int(np.argmax(votes))  # vote ties go to the lowest class index


def _uncertainties(model: LinearSoftmaxModel, features: np.ndarray) -> np.ndarray:
    probs = model.predict_probs(features)
    nz = np.where(probs > 0, probs, 1.0)
    return -np.sum(probs * np.log(nz), axis=1)


def select_batch(remaining: list[int], features: np.ndarray,
                 model, batch_size: int) -> list[int]:
    """Pick the most-uncertain remaining examples; ties break by pool index."""
    if not getattr(model, "probabilistic", False):
        raise UnsupportedError("active ordering needs a probabilistic model")
    idx = np.asarray(remaining)
    unc = _uncertainties(model, features[idx])
    order = np.lexsort((idx, -unc))
    return [int(idx[i]) for i in order[:batch_size]]


def order_examples(pool: Corpus, model, mode: str, batch_size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Full annotation order: a seeded shuffle, or repeated highest-uncertainty
    batch selection under the given (static) model."""
    n = len(pool)
    if mode == "random":
        return rng.permutation(n)
    if mode != "active":
        raise ValueError(f"unknown ordering {mode!r}")
    features = pool.feature_matrix()
    remaining = list(range(n))
    out = []
    while remaining:
        picked = select_batch(remaining, features, model, batch_size)
        out.extend(picked)
        remaining = [i for i in remaining if i not in set(picked)]
    return np.asarray(out)


def make_synthetic_corpus(num_examples: int, num_classes: int = 4, dim: int = 8,
                          separation: float = 3.0, seed: int = 0,
                          anisotropy: float = 0.0, bimodal_classes: int = 0,
                          slab_classes: int = 0, slab_spread: float = 5.0,
                          noise_scale: float = 1.0, class_names=None) -> Corpus:
    """Gaussian clusters (unit base scale), class c's cluster offset by
    ``separation`` along axis c.

    Optional hardness knobs shape which annotator a region favors:

    - The first ``bimodal_classes`` classes get a mirrored twin cluster at
      -separation on their axis. A mirrored class has zero mean, so no linear
      classifier can isolate it while nearest-neighbor inference still can;
      this reproduces the regime where a model keeps making the same mistake
      on similar examples.
    - The last ``slab_classes`` classes become wide slabs: half the
      separation along their own axis, but a ``slab_spread``-sigma spread
      along the first axes (the mirrored classes' signal axes). Neighborhoods
      inside a slab are scrambled by that spread, and a diagonal metric
      cannot shrink the spread axes without destroying the mirrored classes,
      so nearest-neighbor inference stays weak where a linear model is
      strong. Together with mirrored classes this yields two-way
      complementarity between the two annotators.
    - ``noise_scale`` > 1 inflates the class-independent dimensions, which
      degrades unweighted nearest-neighbor distances until a metric is
      learned, while a parametric model simply learns to ignore them.

    ``anisotropy`` > 0 additionally stretches each class's per-dimension
    scales to exp(U(-a, a)), keeping the geometric-mean scale at 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if class_names is None:
        class_names = [f"class_{i}" for i in range(num_classes)]
    label_space = LabelSpace(tuple(class_names))
    if num_classes <= dim:
        means = np.zeros((num_classes, dim))
        means[np.arange(num_classes), np.arange(num_classes)] = separation
    else:
        dirs = rng.normal(size=(num_classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = dirs * separation
    if not 0 <= bimodal_classes <= num_classes:
        raise ValueError("bimodal_classes out of range")
    if not 0 <= slab_classes <= num_classes - bimodal_classes:
        raise ValueError("slab_classes out of range")
    if anisotropy > 0.0:
        scales = np.exp(rng.uniform(-anisotropy, anisotropy, size=(num_classes, dim)))
    else:
        scales = np.ones((num_classes, dim))
    if noise_scale != 1.0 and num_classes < dim:
        scales[:, num_classes:] *= noise_scale
    if slab_classes > 0:
        # Slabs come in +/- pairs on a shared axis, so a pair of slab classes
        # sits exactly `separation` apart along that axis.
        spread_dims = np.arange(max(bimodal_classes, 2))
        for j in range(slab_classes):
            cls = num_classes - 1 - j
            axis = dim - 1 - (j // 2)
            means[cls] = 0.0
            means[cls, axis] = (separation / 2.0) * (1 if j % 2 == 0 else -1)
            scales[cls, spread_dims] = slab_spread
    labels = rng.integers(num_classes, size=num_examples)
    signs = np.where((labels < bimodal_classes) & (rng.random(num_examples) < 0.5),
                     -1.0, 1.0)
    feats = means[labels] * signs[:, None] + rng.normal(size=(num_examples, dim)) * scales[labels]
    width = len(str(num_examples - 1))
    examples = [
        Example(id=f"ex{i:0{width}d}", feature=feats[i], gold_label=int(labels[i]))
        for i in range(num_examples)
    ]
    return Corpus(examples=examples, label_space=label_space, dim=dim)


# -- experiment configuration and report ------------------------------------


@dataclass
class ExperimentConfig:
    session: SessionConfig = field(default_factory=SessionConfig)
    oracle_kind: str = "perfect"
    oracle_annotators: int = 10
    oracle_p_max: float = 0.3
    oracle_p_errors: list | None = None
    sizes: tuple = DEFAULT_SIZES
    seeds: tuple = (0,)
    variants: tuple = ("full",)
    model_kind: str = "linear"

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.variants = tuple(self.variants)
        if not self.sizes or not self.seeds or not self.variants:
            raise ValueError("sizes, seeds and variants must be non-empty")
        if self.model_kind not in ("linear", "linear_discrete"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        for v in self.variants:
            parse_variant(v)


def parse_variant(name: str) -> tuple[str, float | None]:
    """Map a variant string to (ablation, const_lambda)."""
    if name in ("full", "no_knn", "no_f"):
        return name, None
    if name.startswith("const:"):
        value = float(name.split(":", 1)[1])
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"const lambda {value} outside [0, 1]")
        return "const_lambda", value
    raise ValueError(f"unknown variant {name!r}")


@dataclass
class RunRow:
    variant: str
    size: int
    seed: int
    mca: float


@dataclass
class RunReport:
    rows: list[RunRow] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def aggregates(self) -> list[tuple[str, int, float, float]]:
        """(variant, size, mean, std) per cell, in first-seen order."""
        cells: dict[tuple[str, int], list[float]] = {}
        for row in self.rows:
            cells.setdefault((row.variant, row.size), []).append(row.mca)
        return [(v, s, float(np.mean(m)), float(np.std(m)))
                for (v, s), m in cells.items()]

    def mean_mca(self, variant: str, size: int) -> float:
        vals = [r.mca for r in self.rows if r.variant == variant and r.size == size]
        if not vals:
            raise KeyError(f"no rows for {variant!r} at size {size}")
        return float(np.mean(vals))


def _lambda_split(state: SessionState) -> dict:
    """Figure-style diagnostic: the annotation model's accuracy on the
    suggestions it was trusted with (lambda > 0.5) vs the rest, plus KNN's
    accuracy on the latter set."""
    high = [r for r in state.history if r.lam > 0.5]
    low = [r for r in state.history if r.lam <= 0.5]

    def acc(records, attr):
        vals = [getattr(r, attr) == r.human_label for r in records
                if getattr(r, attr) is not None]
        return float(np.mean(vals)) if vals else None

    return {
        "n_high": len(high),
        "n_low": len(low),
        "f_acc_high": acc(high, "f_class"),
        "f_acc_low": acc(low, "f_class"),
        "knn_acc_low": acc(low, "g_class"),
        "lambda_histogram": state.lambda_histogram(),
    }


def run_single(session_config: SessionConfig, corpus: Corpus, size: int,
               oracle: Oracle, record_sizes=(),
               model_kind: str = "linear") -> tuple[SessionState, dict[int, float]]:
    """Stream ``size`` examples through one fresh session; returns the session
    and the MCA observed at each requested prefix size."""
    if size > len(corpus):
        raise ValueError(f"size {size} exceeds corpus of {len(corpus)}")
    label_space = corpus.label_space
    if model_kind == "linear_discrete":
        model = DiscreteLinearModel(label_space.num_classes, corpus.dim,
                                    lr=session_config.lr_f)
    else:
        model = LinearSoftmaxModel(label_space.num_classes, corpus.dim,
                                   lr=session_config.lr_f)
    state = SessionState(model, label_space, corpus.dim, session_config)
    order_rng = np.random.default_rng(
        np.random.SeedSequence([session_config.seed, 7919]))

    features = corpus.feature_matrix()
    remaining = list(range(len(corpus)))
    if session_config.ordering == "random":
        remaining = [int(i) for i in order_rng.permutation(len(corpus))]

    mca_at: dict[int, float] = {}
    done = 0
    record = set(record_sizes) or {size}
    while done < size:
        take = min(session_config.batch_size, size - done)
        if session_config.ordering == "active":
            batch = select_batch(remaining, features, model, take)
        else:
            batch = remaining[:take]
        remaining = [i for i in remaining if i not in set(batch)]
        for i in batch:
            example = corpus.examples[i]
            suggestion = state.suggest(example)
            label = oracle_label(oracle, example, label_space.num_classes)
            state.feedback(suggestion, label)
            done += 1
            if done in record:
                mca_at[done] = state.mca()
    return state, mca_at


def run_experiment(config: ExperimentConfig, corpus: Corpus) -> RunReport:
    """Run every variant x seed cell and collect MCA rows at each prefix size.

    One fresh session per (variant, seed) streams max(sizes) examples; the
    running MCA is sampled as the stream crosses each size. The oracle draws
    from its own rng stream, so label noise never perturbs session behavior.
    """
    if corpus.label_space is None:
        raise ValueError("corpus has no label space")
    max_size = max(config.sizes)
    if max_size > len(corpus):
        raise ValueError(f"size {max_size} exceeds corpus of {len(corpus)}")
    report = RunReport()
    lambda_mode = "binary" if config.model_kind == "linear_discrete" else "continuous"
    for variant in config.variants:
        ablation, const = parse_variant(variant)
        diag_per_seed = {}
        for seed in config.seeds:
            session_config = replace(config.session, seed=seed, ablation=ablation,
                                     const_lambda=const, lambda_mode=lambda_mode)
            oracle = make_oracle(config.oracle_kind, seed=seed + 104729,
                                 annotators=config.oracle_annotators,
                                 p_max=config.oracle_p_max,
                                 p_errors=config.oracle_p_errors)
            state, mca_at = run_single(session_config, corpus, max_size, oracle,
                                       record_sizes=config.sizes,
                                       model_kind=config.model_kind)
            for size in config.sizes:
                report.rows.append(RunRow(variant, size, seed, mca_at[size]))
            diag_per_seed[str(seed)] = _lambda_split(state)
        report.diagnostics[variant] = diag_per_seed
    return report


def write_report(report: RunReport, out_dir) -> dict:
    """Write raw rows, per-cell aggregates, and diagnostics; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_path = out / "mca_raw.csv"
    agg_path = out / "mca_aggregate.csv"
    diag_path = out / "diagnostics.json"
    with open(raw_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "size", "seed", "mca"])
        for row in report.rows:
            writer.writerow([row.variant, row.size, row.seed, repr(row.mca)])
    with open(agg_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "size", "mca_mean", "mca_std"])
        for variant, size, mean, std in report.aggregates():
            writer.writerow([variant, size, repr(mean), repr(std)])
    with open(diag_path, "w", encoding="utf-8") as fh:
        json.dump(report.diagnostics, fh, indent=2, sort_keys=True)
    return {"raw": raw_path, "aggregate": agg_path, "diagnostics": diag_path}


def read_report(raw_path) -> RunReport:
    """Parse a raw CSV back into rows (round-trips with write_report)."""
    report = RunReport()
    with open(raw_path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            report.rows.append(RunRow(rec["variant"], int(rec["size"]),
                                      int(rec["seed"]), float(rec["mca"])))
    return report


def run_sweep(base: ExperimentConfig, corpus: Corpus,
              capacities=(100, 500, 1000, 2000), ks=(5, 10, 20, 50),
              evictions=("class_similar", "class_dissimilar", "fifo", "class_fifo"),
              size: int | None = None) -> list[dict]:
    """Hyperparameter grid over datastore capacity, neighbor count, and
    eviction strategy; one aggregate row per cell."""
    size = size or min(max(base.sizes), len(corpus))
    lambda_mode = "binary" if base.model_kind == "linear_discrete" else "continuous"
    rows = []
    for capacity in capacities:
        for k in ks:
            for eviction in evictions:
                mcas = []
                for seed in base.seeds:
                    session_config = replace(base.session, seed=seed,
                                             capacity=capacity, k=k,
                                             eviction=eviction, ablation="full",
                                             const_lambda=None,
                                             lambda_mode=lambda_mode)
                    oracle = make_oracle(base.oracle_kind, seed=seed + 104729,
                                         annotators=base.oracle_annotators,
                                         p_max=base.oracle_p_max,
                                         p_errors=base.oracle_p_errors)
                    _, mca_at = run_single(session_config, corpus, size, oracle,
                                           model_kind=base.model_kind)
                    mcas.append(mca_at[size])
                rows.append({"capacity": capacity, "k": k, "eviction": eviction,
                             "mca_mean": float(np.mean(mcas)),
                             "mca_std": float(np.std(mcas))})
    return rows


def write_sweep(rows: list[dict], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["capacity", "k", "eviction", "mca_mean", "mca_std"])
        for row in rows:
            writer.writerow([row["capacity"], row["k"], row["eviction"],
                             repr(row["mca_mean"]), repr(row["mca_std"])])
    return path
