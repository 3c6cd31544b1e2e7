"""Two-step removal of chosen triples from trained client embeddings.

Step one (interference) trains on the forget triples with the sign of the
contrastive objective flipped, pushing their scores into the range of
corrupted triples while a soft term keeps positive and negative scores
close and distillation keeps the rest of the embedding anchored. Step two
(decay) reruns mutual-distillation training on the retained triples so the
damage stays confined to the forgotten facts.

Both steps run inside communication rounds over the forgetting clients
only; other clients' tables are never touched. Optimizer state carries
over from training, forget triples stay in the client's filter (they are
never re-sampled as negatives), and the retrain baseline starts from
scratch on the retained triples for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from fedkge.embedding import margin_offset, sample_negative_batch
from fedkge.evaluation import ClientMetrics, ScoringModel, evaluate
from fedkge.federation import (
    ClientShard,
    ClientState,
    RoundConfig,
    ServerState,
    _epoch_batches,
    _mutual_batch,
    _rng,
    _run_clients,
    aggregate,
    distribute_avatar,
    make_mappings,
    run_federated_training,
)
from fedkge.kg import SplitDataset
from fedkge.losses import (
    LossWeights,
    ScoredBatch,
    distill_grads,
    hard_confusion_grads,
    interference_grads,
    joint_local_grads,
    soft_confusion_grads,
)

_STREAM_INTERFERENCE = 6
_STREAM_DECAY = 7
_STREAM_FORGET = 8


@dataclass(frozen=True)
class UnlearnConfig:
    """Knobs for the two-step procedure; epochs split across rounds."""

    interference_epochs: int = 5
    decay_epochs: int = 5
    rounds: int = 1
    batch_size: int = 1024
    n_negatives: int = 256
    weights: LossWeights = LossWeights(mu_distill=2.0, mu_soft=0.1, mu_prox=0.0)
    margin: float = 9.0
    seed: int = 0
    use_hard: bool = True
    use_soft: bool = True
    corrupt_heads: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.interference_epochs < 0 or self.decay_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.interference_epochs + self.decay_epochs < 1:
            raise ValueError("need at least one unlearning epoch")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.batch_size < 1 or self.n_negatives < 1:
            raise ValueError("batch_size and n_negatives must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ForgetEntry:
    """One client's forget/retain partition of its train split (local ids)."""

    forget: np.ndarray
    retain: np.ndarray


@dataclass(frozen=True)
class ForgetSpec:
    entries: dict[int, ForgetEntry]  # key: position in the clients list

    @property
    def client_positions(self) -> list[int]:
        return sorted(self.entries)


def sample_forget_set(
    train: np.ndarray, proportion: float, seed
) -> tuple[np.ndarray, np.ndarray]:
    """Split a train set into ceil(proportion * n) forget rows and the rest."""
    train = np.asarray(train, dtype=np.int64).reshape(-1, 3)
    if len(train) == 0:
        raise ValueError("cannot sample a forget set from an empty train split")
    if not 0 < proportion < 1:
        raise ValueError(f"forget proportion must be in (0, 1), got {proportion}")
    n_forget = math.ceil(proportion * len(train))
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(train), size=n_forget, replace=False)
    mask = np.zeros(len(train), dtype=bool)
    mask[picks] = True
    return train[mask], train[~mask]


def make_forget_spec(
    shards: list[ClientShard],
    proportion: float,
    seed: int,
    positions: list[int] | None = None,
) -> ForgetSpec:
    """Sample a forget set per client; ``positions`` limits who forgets."""
    if positions is None:
        positions = list(range(len(shards)))
    entries = {}
    for p in sorted(positions):
        shard = shards[p]
        forget, retain = sample_forget_set(
            shard.splits.train, proportion,
            [seed, _STREAM_FORGET, shard.client_id],
        )
        entries[p] = ForgetEntry(forget=forget, retain=retain)
    return ForgetSpec(entries)


# ---------------------------------------------------------------------------
# the two steps


def _ablated_interference_grads(
    batch: ScoredBatch,
    teacher: np.ndarray | None,
    weights: LossWeights,
    use_hard: bool,
    use_soft: bool,
) -> tuple[np.ndarray, np.ndarray]:
    if use_hard and use_soft:
        return interference_grads(batch, teacher, weights)
    dpos = np.zeros_like(batch.positive)
    dneg = np.zeros_like(batch.negatives)
    if use_hard:
        gp, gn = hard_confusion_grads(batch)
        dpos += gp
        dneg += gn
    if use_soft and weights.mu_soft:
        gp, gn = soft_confusion_grads(batch)
        dpos += weights.mu_soft * gp
        dneg += weights.mu_soft * gn
    if teacher is not None and weights.mu_distill:
        gp, gn = distill_grads(batch, teacher)
        dpos += weights.mu_distill * gp
        dneg += weights.mu_distill * gn
    return dpos, dneg


def interference_step(
    client: ClientState,
    forget: np.ndarray,
    config: UnlearnConfig,
    round_idx: int = 0,
    epochs: int | None = None,
) -> None:
    """Push forget-triple scores down to corrupted-triple level.

    Local tables and relations step first against the confusion objective
    with the avatar's distribution as teacher; the avatar then takes the
    mirrored step with the refreshed local distribution as teacher.
    Negatives are sampled fresh each epoch and never collide with known
    triples, forgotten ones included.
    """
    if epochs is None:
        epochs = config.interference_epochs
    if epochs == 0 or len(forget) == 0:
        return
    offset = margin_offset(client.local_entities.kind, config.margin)
    rng = _rng(config.seed, _STREAM_INTERFERENCE, client.client_id, round_idx)
    pool = np.arange(client.shard.n_entities)

    def grads(b, q):
        return _ablated_interference_grads(
            b, q, config.weights, config.use_hard, config.use_soft
        )

    for _ in range(epochs):
        for batch in _epoch_batches(forget, config.batch_size, rng):
            negatives = sample_negative_batch(
                batch, config.n_negatives, client.shard.filter_index, pool, rng,
                corrupt_heads=config.corrupt_heads,
            )
            _mutual_batch(
                client, config, offset, batch, negatives,
                local_grads=grads, global_grads=grads,
            )


def decay_step(
    client: ClientState,
    retain: np.ndarray,
    config: UnlearnConfig,
    round_idx: int = 0,
    epochs: int | None = None,
) -> None:
    """Mutual-distillation training on the retained triples.

    Restores structure the interference step disturbed beyond the forget
    set; identical batch mechanics to a training round.
    """
    if epochs is None:
        epochs = config.decay_epochs
    if epochs == 0 or len(retain) == 0:
        return
    offset = margin_offset(client.local_entities.kind, config.margin)
    rng = _rng(config.seed, _STREAM_DECAY, client.client_id, round_idx)
    pool = np.arange(client.shard.n_entities)

    def grads(b, q):
        return joint_local_grads(b, q, config.weights)

    for _ in range(epochs):
        for batch in _epoch_batches(retain, config.batch_size, rng):
            negatives = sample_negative_batch(
                batch, config.n_negatives, client.shard.filter_index, pool, rng,
                corrupt_heads=config.corrupt_heads,
            )
            _mutual_batch(
                client, config, offset, batch, negatives,
                local_grads=grads, global_grads=grads,
            )


def _quota(total: int, rounds: int, r: int) -> int:
    return total // rounds + (1 if r < total % rounds else 0)


def run_federated_unlearning(
    server: ServerState,
    clients: list[ClientState],
    forget_spec: ForgetSpec,
    config: UnlearnConfig,
) -> tuple[ServerState, list[ClientState]]:
    """Unlearning rounds over the forgetting clients only, in place.

    Each round distributes avatars to the forgetting clients, runs that
    round's share of interference then decay epochs, and aggregates their
    avatars back; clients outside the spec are untouched, bit for bit.
    """
    positions = forget_spec.client_positions
    if not positions:
        raise ValueError("forget spec names no clients")
    if max(positions) >= len(clients) or min(positions) < 0:
        raise ValueError("forget spec references a client position out of range")
    mapping = make_mappings([c.shard for c in clients])
    for r in range(config.rounds):
        qi = _quota(config.interference_epochs, config.rounds, r)
        qd = _quota(config.decay_epochs, config.rounds, r)

        def work(p: int) -> tuple[int, np.ndarray]:
            client = clients[p]
            entry = forget_spec.entries[p]
            client.global_entities.rows[:] = distribute_avatar(server, mapping, p)
            interference_step(client, entry.forget, config, round_idx=r, epochs=qi)
            decay_step(client, entry.retain, config, round_idx=r, epochs=qd)
            return p, client.global_entities.rows.copy()

        avatars = _run_clients(config, positions, work)
        server.entities.rows = aggregate(avatars, mapping, server.entities.rows)
        server.round += 1
    return server, clients


def retrain_baseline(
    shards: list[ClientShard],
    forget_spec: ForgetSpec,
    config: RoundConfig,
    mode: str = "fedlu",
):
    """Fresh training with each forgetting client's train split replaced by
    its retain set. Valid/test splits and the negative-rejection filter stay
    as in the original run so metrics remain comparable."""
    rebuilt = []
    for p, shard in enumerate(shards):
        if p in forget_spec.entries:
            splits = SplitDataset(
                forget_spec.entries[p].retain, shard.splits.valid, shard.splits.test
            )
            shard = replace(shard, splits=splits)
        rebuilt.append(shard)
    return run_federated_training(rebuilt, config, mode)


# ---------------------------------------------------------------------------
# evaluation helpers


def evaluate_forget(
    clients: list[ClientState], forget_spec: ForgetSpec
) -> dict[int, ClientMetrics]:
    """Filtered metrics of each forgetting client on its forget triples,
    scored with its own entity table."""
    out = {}
    for p in forget_spec.client_positions:
        c = clients[p]
        model = ScoringModel(
            c.local_entities.kind, c.local_entities.rows, c.relations.rows
        )
        out[c.client_id] = evaluate(
            model,
            forget_spec.entries[p].forget,
            np.arange(c.shard.n_entities),
            c.shard.filter_index,
        )
    return out
