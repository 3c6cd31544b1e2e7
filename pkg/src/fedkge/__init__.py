"""Federated knowledge-graph embedding on plain numpy.

Layers, bottom up: triple/vocabulary handling (:mod:`fedkge.kg`), relation
co-occurrence sharding (:mod:`fedkge.partition`), embedding models with
analytic gradients (:mod:`fedkge.embedding`), training losses
(:mod:`fedkge.losses`), filtered ranking metrics (:mod:`fedkge.evaluation`),
the client/server training loop (:mod:`fedkge.federation`), triple
unlearning (:mod:`fedkge.unlearning`), and a command-line front end
(:mod:`fedkge.cli`).

The names most experiments need are re-exported here; the command-line
entry point stays in :mod:`fedkge.cli`.
"""

from fedkge.embedding import (
    AdamState,
    EmbeddingTable,
    ModelKind,
    init_table,
    load_table,
    save_table,
    score,
)
from fedkge.evaluation import (
    ClientMetrics,
    ScoringModel,
    evaluate,
    macro_average,
    metrics_from_ranks,
    micro_average,
    ranks_for_triples,
)
from fedkge.federation import (
    MODES,
    ClientShard,
    ClientState,
    RoundConfig,
    ServerState,
    aggregate,
    evaluate_clients,
    localize_shard,
    make_mappings,
    merge_client_shards,
    run_federated_training,
)
from fedkge.kg import (
    FilterIndex,
    KnowledgeGraph,
    ParseError,
    SplitDataset,
    Vocabulary,
    build_filter_index,
    load_triples,
    split_dataset,
)
from fedkge.losses import LossWeights, ScoredBatch
from fedkge.partition import (
    build_cooccurrence,
    distribute,
    random_partition,
    shard_stats,
    spectral_partition,
)
from fedkge.synthetic import SyntheticSpec, synthetic_graph
from fedkge.unlearning import (
    ForgetSpec,
    UnlearnConfig,
    evaluate_forget,
    make_forget_spec,
    retrain_baseline,
    run_federated_unlearning,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ClientMetrics",
    "ClientShard",
    "ClientState",
    "EmbeddingTable",
    "FilterIndex",
    "ForgetSpec",
    "KnowledgeGraph",
    "LossWeights",
    "MODES",
    "ModelKind",
    "ParseError",
    "RoundConfig",
    "ScoredBatch",
    "ScoringModel",
    "ServerState",
    "SplitDataset",
    "SyntheticSpec",
    "UnlearnConfig",
    "Vocabulary",
    "aggregate",
    "build_cooccurrence",
    "build_filter_index",
    "distribute",
    "evaluate",
    "evaluate_clients",
    "evaluate_forget",
    "init_table",
    "load_table",
    "load_triples",
    "localize_shard",
    "macro_average",
    "make_forget_spec",
    "make_mappings",
    "merge_client_shards",
    "metrics_from_ranks",
    "micro_average",
    "random_partition",
    "ranks_for_triples",
    "retrain_baseline",
    "run_federated_training",
    "run_federated_unlearning",
    "save_table",
    "score",
    "shard_stats",
    "spectral_partition",
    "split_dataset",
    "synthetic_graph",
    "__version__",
]
