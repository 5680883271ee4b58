"""araida: interactive data annotation with KNN-augmented suggestions.

An annotation model proposes labels; a weighted KNN over previously
human-labeled examples proposes alternatives; an error-aware gating network
decides, per example, how much to trust each. Human feedback feeds all three.
"""

from .annotators import (
    ExternalAnnotationModel,
    ExternalModelConfig,
    LinearSoftmaxModel,
    Prediction,
    external_predict,
    linear_predict,
    linear_update,
    uncertainty,
)
from .corpus import (
    Corpus,
    Example,
    LabelSpace,
    embed_corpus,
    load_embedding_table,
    load_examples,
    make_batches,
    save_corpus,
)
from .gating import GatingNet, binarize, build_gating_input, gate_forward, gate_update
from .knn_store import (
    Datastore,
    Entry,
    MetricParams,
    NeighborSet,
    distance,
    evict,
    insert,
    knn_infer,
    retrieve,
    smooth_label,
    update_metric,
)
from .session import SessionConfig, SessionState, Suggestion, load_checkpoint, save_checkpoint
from .experiments import (
    ExperimentConfig,
    Oracle,
    RunReport,
    make_oracle,
    make_synthetic_corpus,
    oracle_label,
    order_examples,
    run_experiment,
    run_sweep,
    write_report,
)

__version__ = "0.1.0"
