"""Client-server federated embedding training.

One communication round: the server projects the global entity table into
each sampled client's local id space (its avatar), clients train locally,
and the server averages the returned avatars per entity. Five modes share
the loop:

``fedlu``
    Clients keep a private entity table and train it jointly with the
    avatar by mutual distillation: per batch the local table takes a step
    with the global score distribution as teacher, then the avatar takes a
    step with the refreshed local distribution as teacher. Relations update
    only in the local step.
``fede``
    The avatar is the only entity table; plain contrastive training.
``fedprox``
    fede plus a proximal pull of entity rows toward the received avatar.
``independent``
    No communication at all.
``centralized``
    One model trained on the union of all shards' train splits, evaluated
    per client on its own splits.

Relations never leave a client. Per-client RNG streams are keyed on
(seed, stream, client, round), so results do not depend on worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from fedkge.embedding import (
    AdamState,
    EmbeddingTable,
    ModelKind,
    adam_step,
    init_table,
    margin_offset,
    sample_negative_batch,
    score,
    score_with_gradients,
    wrap_phases,
)
from fedkge.evaluation import (
    ClientMetrics,
    ScoringModel,
    evaluate,
    macro_average,
)
from fedkge.kg import FilterIndex, KnowledgeGraph, SplitDataset, split_dataset
from fedkge.losses import (
    LossWeights,
    ScoredBatch,
    joint_local_grads,
    prediction_grads,
    score_distribution,
)

MODES = ("fedlu", "fede", "fedprox", "independent", "centralized")

# rng stream ids; every generator in a run is keyed (seed, stream, ...)
_STREAM_SERVER_INIT = 0
_STREAM_ENTITY_INIT = 1
_STREAM_RELATION_INIT = 2
_STREAM_ROUND = 3
_STREAM_SAMPLING = 4
_STREAM_SPLIT = 5

_CENTRAL_ID = 1_000_000  # pseudo client id for the centralized trainer


def _rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(list(parts))


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# shards and mappings


@dataclass(frozen=True)
class ClientShard:
    """A client's slice of the graph, re-coded to local ids.

    ``entities``/``relations`` map local index -> global id (sorted
    ascending, so the map is injective and order-stable). Splits and the
    filter index are in local ids; the filter spans train, valid, and test
    and also backs negative-sample rejection.
    """

    client_id: int
    entities: np.ndarray
    relations: np.ndarray
    splits: SplitDataset
    filter_index: FilterIndex
    n_global_entities: int
    n_global_relations: int

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def to_global(self, local_triples: np.ndarray) -> np.ndarray:
        """Map local-id triples back into the global id space."""
        local_triples = np.asarray(local_triples, dtype=np.int64).reshape(-1, 3)
        return np.stack(
            [
                self.entities[local_triples[:, 0]],
                self.relations[local_triples[:, 1]],
                self.entities[local_triples[:, 2]],
            ],
            axis=1,
        )


def localize_shard(
    client_id: int,
    shard: KnowledgeGraph,
    seed: int,
    ratios: tuple[float, float, float] = (8, 1, 1),
) -> ClientShard:
    """Re-code a global-id shard to local ids and split it.

    The split is a deterministic function of (seed, client_id), so every
    mode sees identical train/valid/test sets.
    """
    ents = shard.entity_ids()
    rels = shard.relation_ids()
    local = np.stack(
        [
            np.searchsorted(ents, shard.triples[:, 0]),
            np.searchsorted(rels, shard.triples[:, 1]),
            np.searchsorted(ents, shard.triples[:, 2]),
        ],
        axis=1,
    )
    splits = split_dataset(local, ratios, seed=_derive_seed(seed, _STREAM_SPLIT, client_id))
    return ClientShard(
        client_id=client_id,
        entities=ents,
        relations=rels,
        splits=splits,
        filter_index=FilterIndex(local),
        n_global_entities=shard.n_entities,
        n_global_relations=shard.n_relations,
    )


@dataclass(frozen=True)
class EntityMapping:
    """Per-client local-to-global entity maps plus existence counts.

    ``counts[g]`` is the number of clients holding global entity g across
    ALL clients; aggregation recomputes counts over the sampled subset.
    """

    locals_to_global: list[np.ndarray]
    counts: np.ndarray
    n_global: int

    @property
    def overlap_entities(self) -> int:
        return int((self.counts >= 2).sum())


def make_mappings(shards: list[ClientShard]) -> EntityMapping:
    n_global = shards[0].n_global_entities
    counts = np.zeros(n_global, dtype=np.int64)
    maps = []
    for s in shards:
        maps.append(s.entities)
        counts[s.entities] += 1
    return EntityMapping(locals_to_global=maps, counts=counts, n_global=n_global)


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class RoundConfig:
    """Everything one training run needs besides the shards."""

    model: ModelKind = ModelKind.TRANSE
    dim: int = 256
    rounds: int = 50
    fraction: float = 1.0
    local_epochs: int = 3
    batch_size: int = 1024
    n_negatives: int = 256
    lr: float = 1e-4
    margin: float = 9.0
    weights: LossWeights = LossWeights(mu_distill=2.0, mu_soft=0.1, mu_prox=0.1)
    eval_interval: int = 5
    patience: int = 3
    seed: int = 0
    corrupt_heads: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.batch_size < 1 or self.n_negatives < 1:
            raise ValueError("batch_size and n_negatives must be >= 1")
        if self.eval_interval < 1 or self.patience < 1:
            raise ValueError("eval_interval and patience must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class ClientState:
    """One client's tables and optimizers; owned by one loop at a time."""

    client_id: int
    shard: ClientShard
    local_entities: EmbeddingTable
    relations: EmbeddingTable
    global_entities: EmbeddingTable
    opt_local: AdamState
    opt_relations: AdamState
    opt_global: AdamState


@dataclass(frozen=True)
class HistoryRow:
    round: int
    client_id: int | None  # None marks the macro row
    split: str  # "valid" | "test"
    variant: str  # "local" | "global"
    metrics: ClientMetrics


@dataclass
class ServerState:
    entities: EmbeddingTable
    round: int = 0
    history: list[HistoryRow] = field(default_factory=list)


def init_client_state(shard: ClientShard, config: RoundConfig) -> ClientState:
    local = init_table(
        shard.n_entities, config.model, "entity", config.dim,
        [config.seed, _STREAM_ENTITY_INIT, shard.client_id],
    )
    rel = init_table(
        shard.n_relations, config.model, "relation", config.dim,
        [config.seed, _STREAM_RELATION_INIT, shard.client_id],
    )
    glob = EmbeddingTable(np.zeros_like(local.rows), config.model, "entity")
    return ClientState(
        client_id=shard.client_id,
        shard=shard,
        local_entities=local,
        relations=rel,
        global_entities=glob,
        opt_local=AdamState.for_table(local, config.lr),
        opt_relations=AdamState.for_table(rel, config.lr),
        opt_global=AdamState.for_table(glob, config.lr),
    )


def clone_client_state(client: ClientState) -> ClientState:
    return ClientState(
        client_id=client.client_id,
        shard=client.shard,
        local_entities=client.local_entities.copy(),
        relations=client.relations.copy(),
        global_entities=client.global_entities.copy(),
        opt_local=client.opt_local.copy(),
        opt_relations=client.opt_relations.copy(),
        opt_global=client.opt_global.copy(),
    )


def clone_server_state(server: ServerState) -> ServerState:
    return ServerState(
        entities=server.entities.copy(),
        round=server.round,
        history=list(server.history),
    )


# ---------------------------------------------------------------------------
# avatar exchange


def distribute_avatar(server: ServerState, mapping: EntityMapping, k: int) -> np.ndarray:
    """Copy of the global rows a client holds, in its local order."""
    return server.entities.rows[mapping.locals_to_global[k]].copy()


def aggregate(
    avatars: Mapping[int, np.ndarray], mapping: EntityMapping, previous: np.ndarray
) -> np.ndarray:
    """Per-entity mean of returned avatars over the sampled clients.

    Counts are taken over the sampled subset only; a global entity held by
    no sampled client keeps its row from ``previous``.
    """
    sums = np.zeros_like(previous)
    counts = np.zeros(len(previous), dtype=np.int64)
    for k, rows in avatars.items():
        ids = mapping.locals_to_global[k]
        sums[ids] += rows
        counts[ids] += 1
    out = previous.copy()
    touched = counts > 0
    out[touched] = sums[touched] / counts[touched, None]
    return out


# ---------------------------------------------------------------------------
# batch optimization primitives (shared with the unlearning module)

GradFn = Callable[[ScoredBatch], tuple[np.ndarray, np.ndarray]]


def _scatter_sum(ids: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum gradient rows sharing an id; returns (unique ids, sums).

    One stable sort groups the rows; segment sums then come from a single
    cumulative sum, which beats a segmented reduce by a wide margin on the
    row counts a training batch produces.
    """
    if len(ids) == 0:
        return ids, grads
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    boundary = np.empty(len(sorted_ids), dtype=bool)
    boundary[0] = True
    np.not_equal(sorted_ids[1:], sorted_ids[:-1], out=boundary[1:])
    starts = np.nonzero(boundary)[0]
    csum = np.cumsum(grads[order], axis=0)
    ends = np.empty(len(starts), dtype=np.int64)
    ends[:-1] = starts[1:] - 1
    ends[-1] = len(sorted_ids) - 1
    sums = csum[ends]
    sums[1:] -= csum[ends[:-1]]
    return sorted_ids[starts], sums


def _neg_views(
    ent_rows: np.ndarray,
    rel_rows: np.ndarray,
    negatives: np.ndarray,
    ph: np.ndarray,
    pr: np.ndarray,
    heads_constant: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gathered (or broadcast) negative head/relation/tail rows.

    When negatives only corrupt tails, their head and relation rows equal
    the positive's, so broadcast views replace two large gathers.
    """
    vt = ent_rows[negatives[..., 2]]
    if heads_constant:
        shape = negatives.shape[:2]
        vh = np.broadcast_to(ph[:, None, :], shape + (ent_rows.shape[1],))
        vr = np.broadcast_to(pr[:, None, :], shape + (rel_rows.shape[1],))
    else:
        vh = ent_rows[negatives[..., 0]]
        vr = rel_rows[negatives[..., 1]]
    return vh, vr, vt


def _scored_batch(
    kind: ModelKind,
    offset: float,
    ent_rows: np.ndarray,
    rel_rows: np.ndarray,
    triples: np.ndarray,
    negatives: np.ndarray,
    provenance: str = "local",
    heads_constant: bool = False,
) -> ScoredBatch:
    ph, pr = ent_rows[triples[:, 0]], rel_rows[triples[:, 1]]
    pos = score(kind, ph, pr, ent_rows[triples[:, 2]]) + offset
    vh, vr, vt = _neg_views(ent_rows, rel_rows, negatives, ph, pr, heads_constant)
    neg = score(kind, vh, vr, vt) + offset
    return ScoredBatch(pos, neg, provenance)


def _batch_distribution(
    kind, offset, ent_rows, rel_rows, triples, negatives,
    provenance="local", heads_constant=False,
) -> np.ndarray:
    """Teacher softmax rows for a batch; no gradients flow through these."""
    return score_distribution(
        _scored_batch(kind, offset, ent_rows, rel_rows, triples, negatives,
                      provenance, heads_constant)
    )


def _apply_batch(
    kind: ModelKind,
    offset: float,
    ent_table: EmbeddingTable,
    rel_table: EmbeddingTable,
    opt_ent: AdamState,
    opt_rel: AdamState | None,
    triples: np.ndarray,
    negatives: np.ndarray,
    loss_grads: GradFn,
    update_relations: bool,
    heads_constant: bool,
    prox_anchor: np.ndarray | None = None,
    mu_prox: float = 0.0,
) -> None:
    """One optimizer step of the given tables on one batch.

    ``loss_grads`` maps the batch's scores to (d loss / d positive score,
    d loss / d negative scores); everything else is the chain rule plus a
    scatter into unique rows. ``heads_constant`` marks that all negatives
    of a positive share its head row, enabling a cheaper reduction.
    """
    E, R = ent_table.rows, rel_table.rows
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    nt = negatives[..., 2]
    ph, pr, pt = E[h], R[r], E[t]
    vh, vr, vt = _neg_views(E, R, negatives, ph, pr, heads_constant)

    s_pos, gph, gpr, gpt = score_with_gradients(kind, ph, pr, pt)
    s_neg, gvh, gvr, gvt = score_with_gradients(kind, vh, vr, vt)
    batch = ScoredBatch(s_pos + offset, s_neg + offset)
    dpos, dneg = loss_grads(batch)
    w = dpos[:, None]
    wn = dneg[..., None]

    ent_w = E.shape[1]
    head_reduced = None
    ids = [h, t, nt.reshape(-1)]
    grads = [w * gph, w * gpt, (wn * gvt).reshape(-1, ent_w)]
    if heads_constant:
        # all negatives of row b keep head h_b: reduce over negatives first
        head_reduced = (wn * gvh).sum(axis=1)
        ids.append(h)
        grads.append(head_reduced)
    else:
        ids.append(negatives[..., 0].reshape(-1))
        grads.append((wn * gvh).reshape(-1, ent_w))
    uniq_e, acc_e = _scatter_sum(np.concatenate(ids), np.concatenate(grads))
    if prox_anchor is not None and mu_prox:
        acc_e += mu_prox * (E[uniq_e] - prox_anchor[uniq_e])
    adam_step(ent_table, uniq_e, acc_e, opt_ent)

    if update_relations:
        # negatives never corrupt the relation, so reduce per positive;
        # when the head and relation gradients alias, the reduction of the
        # head side already is that sum
        if gvr is gvh and head_reduced is not None:
            rel_neg = head_reduced
        else:
            rel_neg = (wn * gvr).sum(axis=1)
        uniq_r, acc_r = _scatter_sum(
            np.concatenate([r, r]), np.concatenate([w * gpr, rel_neg])
        )
        adam_step(rel_table, uniq_r, acc_r, opt_rel)
        if kind is ModelKind.ROTATE:
            rel_table.rows[uniq_r] = wrap_phases(rel_table.rows[uniq_r])


def _mutual_batch(
    client: ClientState,
    config,
    offset: float,
    triples: np.ndarray,
    negatives: np.ndarray,
    local_grads: Callable[[ScoredBatch, np.ndarray | None], tuple[np.ndarray, np.ndarray]],
    global_grads: Callable[[ScoredBatch, np.ndarray | None], tuple[np.ndarray, np.ndarray]],
) -> None:
    """Alternating local/global step on one batch (mutual distillation).

    The local tables step first with the avatar's score distribution as
    teacher; the avatar then steps with the refreshed local distribution
    as teacher. Relations move only with the local step; teachers are
    constants.
    """
    kind = client.local_entities.kind
    distill = config.weights.mu_distill > 0
    heads_const = not config.corrupt_heads

    teacher = None
    if distill:
        teacher = _batch_distribution(
            kind, offset, client.global_entities.rows, client.relations.rows,
            triples, negatives, provenance="global", heads_constant=heads_const,
        )
    _apply_batch(
        kind, offset, client.local_entities, client.relations,
        client.opt_local, client.opt_relations, triples, negatives,
        loss_grads=lambda b: local_grads(b, teacher),
        update_relations=True, heads_constant=heads_const,
    )

    teacher = None
    if distill:
        teacher = _batch_distribution(
            kind, offset, client.local_entities.rows, client.relations.rows,
            triples, negatives, provenance="local", heads_constant=heads_const,
        )
    _apply_batch(
        kind, offset, client.global_entities, client.relations,
        client.opt_global, None, triples, negatives,
        loss_grads=lambda b: global_grads(b, teacher),
        update_relations=False, heads_constant=heads_const,
    )


def _epoch_batches(triples: np.ndarray, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(len(triples))
    for lo in range(0, len(triples), batch_size):
        yield triples[perm[lo : lo + batch_size]]


# ---------------------------------------------------------------------------
# the local round


def local_round(
    client: ClientState,
    avatar: np.ndarray | None,
    config: RoundConfig,
    round_idx: int = 0,
    mode: str = "fedlu",
) -> np.ndarray | None:
    """Train one client for ``local_epochs`` and return its new avatar.

    fedlu installs the avatar as the global table and runs the mutual
    batch step; fede/fedprox adopt the avatar as their only entity table
    and run plain contrastive steps (fedprox anchoring entity rows to the
    received copy); independent ignores avatars entirely and returns None.
    """
    if avatar is not None and avatar.shape != client.local_entities.rows.shape:
        raise ValueError(
            f"avatar shape {avatar.shape} does not match client entity table "
            f"{client.local_entities.rows.shape}"
        )
    kind = config.model
    offset = margin_offset(kind, config.margin)
    anchor = None
    if avatar is not None:
        if mode in ("fede", "fedprox"):
            client.local_entities.rows[:] = avatar
            if mode == "fedprox":
                anchor = avatar.copy()
        else:
            client.global_entities.rows[:] = avatar

    def outgoing() -> np.ndarray | None:
        if mode == "independent":
            return None
        if mode in ("fede", "fedprox"):
            return client.local_entities.rows.copy()
        return client.global_entities.rows.copy()

    train = client.shard.splits.train
    if len(train) == 0:
        return outgoing()

    rng = _rng(config.seed, _STREAM_ROUND, client.client_id, round_idx)
    pool = np.arange(client.shard.n_entities)
    weights = config.weights
    for _ in range(config.local_epochs):
        for batch in _epoch_batches(train, config.batch_size, rng):
            negatives = sample_negative_batch(
                batch, config.n_negatives, client.shard.filter_index, pool, rng,
                corrupt_heads=config.corrupt_heads,
            )
            if mode == "fedlu":
                _mutual_batch(
                    client, config, offset, batch, negatives,
                    local_grads=lambda b, q: joint_local_grads(b, q, weights),
                    global_grads=lambda b, q: joint_local_grads(b, q, weights),
                )
            else:
                _apply_batch(
                    kind, offset, client.local_entities, client.relations,
                    client.opt_local, client.opt_relations, batch, negatives,
                    loss_grads=prediction_grads,
                    update_relations=True,
                    heads_constant=not config.corrupt_heads,
                    prox_anchor=anchor,
                    mu_prox=weights.mu_prox if mode == "fedprox" else 0.0,
                )
    return outgoing()


# ---------------------------------------------------------------------------
# evaluation plumbing


def _eval_one(
    client: ClientState, entity_rows: np.ndarray, split: str
) -> ClientMetrics:
    triples = getattr(client.shard.splits, split)
    model = ScoringModel(
        client.local_entities.kind, entity_rows, client.relations.rows
    )
    return evaluate(
        model, triples, np.arange(client.shard.n_entities), client.shard.filter_index
    )


def evaluate_clients(
    clients: list[ClientState],
    split: str,
    variant: str = "local",
    server: ServerState | None = None,
    mapping: EntityMapping | None = None,
) -> dict[int, ClientMetrics]:
    """Per-client filtered metrics on a split.

    variant "local" scores with each client's own entity table; "global"
    projects the server table through the mapping and keeps the client's
    relations.
    """
    out: dict[int, ClientMetrics] = {}
    for i, c in enumerate(clients):
        if variant == "global":
            rows = distribute_avatar(server, mapping, i)
        else:
            rows = c.local_entities.rows
        out[c.client_id] = _eval_one(c, rows, split)
    return out


def _append_history(
    history: list[HistoryRow],
    round_idx: int,
    split: str,
    variant: str,
    per_client: dict[int, ClientMetrics],
) -> None:
    for cid, m in sorted(per_client.items()):
        history.append(HistoryRow(round_idx, cid, split, variant, m))
    history.append(
        HistoryRow(round_idx, None, split, variant, macro_average(per_client))
    )


def write_history_csv(path: str | Path, history: list[HistoryRow], variant: str) -> None:
    """History rows of one variant as CSV; metrics scaled to percent."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "client_id", "split", "hits1", "hits3", "hits10", "mrr"])
        for row in history:
            if row.variant != variant:
                continue
            m = row.metrics
            writer.writerow([
                row.round,
                "macro" if row.client_id is None else row.client_id,
                row.split,
                f"{m.hits1 * 100:.4f}",
                f"{m.hits3 * 100:.4f}",
                f"{m.hits10 * 100:.4f}",
                f"{m.mrr * 100:.4f}",
            ])


# ---------------------------------------------------------------------------
# the training loop


def _sample_clients(config: RoundConfig, round_idx: int, n_clients: int) -> list[int]:
    k = max(1, int(round(config.fraction * n_clients)))
    if k >= n_clients:
        return list(range(n_clients))
    rng = _rng(config.seed, _STREAM_SAMPLING, round_idx)
    return sorted(rng.choice(n_clients, size=k, replace=False).tolist())


def _run_clients(
    config: RoundConfig, sampled: list[int], work: Callable[[int], tuple[int, np.ndarray | None]]
) -> dict[int, np.ndarray | None]:
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, sampled))
    else:
        results = [work(k) for k in sampled]
    return dict(results)


@dataclass
class _Snapshot:
    round: int
    server_rows: np.ndarray
    clients: list[ClientState]


def _take_snapshot(server: ServerState, clients: list[ClientState]) -> _Snapshot:
    return _Snapshot(
        round=server.round,
        server_rows=server.entities.rows.copy(),
        clients=[clone_client_state(c) for c in clients],
    )


def _restore_snapshot(
    server: ServerState, clients: list[ClientState], snap: _Snapshot
) -> None:
    server.entities.rows[:] = snap.server_rows
    server.round = snap.round
    for i, c in enumerate(snap.clients):
        clients[i] = c


def run_federated_training(
    shards: list[ClientShard],
    config: RoundConfig,
    mode: str,
    *,
    init_state: tuple[ServerState, list[ClientState]] | None = None,
    start_round: int = 0,
) -> tuple[ServerState, list[ClientState], list[HistoryRow]]:
    """Full training run in the requested mode.

    Every ``eval_interval`` rounds the validation macro-MRR (local
    variant) is recorded; after ``patience`` evaluations without
    improvement training stops and the best state is restored. Test-split
    metrics for the restored state close the history.

    Passing ``init_state`` with ``start_round`` resumes a checkpointed run
    at that round; rounds are keyed into the RNG, so the remaining rounds
    replay exactly (early-stopping counters restart at the resume point).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not shards:
        raise ValueError("no shards")
    if not 0 <= start_round <= config.rounds:
        raise ValueError(
            f"start_round {start_round} outside [0, {config.rounds}]"
        )
    if mode == "centralized":
        return _run_centralized(shards, config, init_state, start_round)

    mapping = make_mappings(shards)
    if init_state is not None:
        server, clients = init_state
        if len(clients) != len(shards):
            raise ValueError(
                f"resume state has {len(clients)} clients for {len(shards)} shards"
            )
    else:
        clients = [init_client_state(s, config) for s in shards]
        server = ServerState(
            entities=init_table(
                mapping.n_global, config.model, "entity", config.dim,
                [config.seed, _STREAM_SERVER_INIT],
            )
        )
    federated = mode != "independent"
    history: list[HistoryRow] = server.history

    best_mrr = -np.inf
    best: _Snapshot | None = None
    stale = 0
    for t in range(start_round, config.rounds):
        sampled = _sample_clients(config, t, len(clients))

        def work(k: int) -> tuple[int, np.ndarray | None]:
            avatar = distribute_avatar(server, mapping, k) if federated else None
            return k, local_round(clients[k], avatar, config, round_idx=t, mode=mode)

        avatars = _run_clients(config, sampled, work)
        if federated:
            server.entities.rows = aggregate(
                {k: v for k, v in avatars.items() if v is not None},
                mapping,
                server.entities.rows,
            )
        server.round = t + 1

        if (t + 1) % config.eval_interval == 0:
            local_metrics = evaluate_clients(clients, "valid", "local")
            _append_history(history, t + 1, "valid", "local", local_metrics)
            if federated:
                global_metrics = evaluate_clients(
                    clients, "valid", "global", server=server, mapping=mapping
                )
                _append_history(history, t + 1, "valid", "global", global_metrics)
            mrr = macro_average(local_metrics).mrr
            if mrr > best_mrr:
                best_mrr = mrr
                best = _take_snapshot(server, clients)
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break

    if best is not None:
        _restore_snapshot(server, clients, best)
    final_round = server.round
    _append_history(
        history, final_round, "test", "local", evaluate_clients(clients, "test", "local")
    )
    if federated:
        _append_history(
            history, final_round, "test", "global",
            evaluate_clients(clients, "test", "global", server=server, mapping=mapping),
        )
    return server, clients, history


# ---------------------------------------------------------------------------
# centralized control


def merge_client_shards(shards: list[ClientShard]) -> ClientShard:
    """Union shard: per-client splits mapped to one shared local id space."""
    ents = np.unique(np.concatenate([s.entities for s in shards]))
    rels = np.unique(np.concatenate([s.relations for s in shards]))

    def remap(global_triples: np.ndarray) -> np.ndarray:
        return np.stack(
            [
                np.searchsorted(ents, global_triples[:, 0]),
                np.searchsorted(rels, global_triples[:, 1]),
                np.searchsorted(ents, global_triples[:, 2]),
            ],
            axis=1,
        )

    parts = {
        name: np.concatenate(
            [remap(s.to_global(getattr(s.splits, name))) for s in shards]
        )
        for name in ("train", "valid", "test")
    }
    splits = SplitDataset(parts["train"], parts["valid"], parts["test"])
    return ClientShard(
        client_id=_CENTRAL_ID,
        entities=ents,
        relations=rels,
        splits=splits,
        filter_index=FilterIndex(splits.all_triples()),
        n_global_entities=shards[0].n_global_entities,
        n_global_relations=shards[0].n_global_relations,
    )


def _run_centralized(
    shards: list[ClientShard],
    config: RoundConfig,
    init_state: tuple[ServerState, list[ClientState]] | None = None,
    start_round: int = 0,
) -> tuple[ServerState, list[ClientState], list[HistoryRow]]:
    merged = merge_client_shards(shards)
    if init_state is not None:
        _, (center,) = init_state
    else:
        center = init_client_state(merged, config)

    # per original client: triples/candidates/filter re-coded to the
    # merged local id space, for projected evaluation
    proj = []
    for s in shards:
        cand = np.searchsorted(merged.entities, s.entities)
        triples = {
            name: np.stack(
                [
                    np.searchsorted(merged.entities, g[:, 0]),
                    np.searchsorted(merged.relations, g[:, 1]),
                    np.searchsorted(merged.entities, g[:, 2]),
                ],
                axis=1,
            )
            for name, g in (
                ("train", s.to_global(s.splits.train)),
                ("valid", s.to_global(s.splits.valid)),
                ("test", s.to_global(s.splits.test)),
            )
        }
        fidx = FilterIndex(np.concatenate(list(triples.values())))
        proj.append((s.client_id, cand, triples, fidx))

    def eval_projected(split: str) -> dict[int, ClientMetrics]:
        model = ScoringModel(config.model, center.local_entities.rows, center.relations.rows)
        return {
            cid: evaluate(model, triples[split], cand, fidx)
            for cid, cand, triples, fidx in proj
        }

    server = ServerState(
        entities=EmbeddingTable(
            np.zeros((merged.n_global_entities, center.local_entities.width)),
            config.model, "entity",
        ),
        round=start_round,
    )
    history: list[HistoryRow] = server.history
    best_mrr = -np.inf
    best: _Snapshot | None = None
    stale = 0
    for t in range(start_round, config.rounds):
        local_round(center, None, config, round_idx=t, mode="independent")
        server.round = t + 1
        if (t + 1) % config.eval_interval == 0:
            metrics = eval_projected("valid")
            _append_history(history, t + 1, "valid", "local", metrics)
            mrr = macro_average(metrics).mrr
            if mrr > best_mrr:
                best_mrr = mrr
                best = _Snapshot(
                    server.round, server.entities.rows, [clone_client_state(center)]
                )
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best is not None:
        server.round = best.round
        center = best.clients[0]
    _append_history(history, server.round, "test", "local", eval_projected("test"))
    # expose the union rows through the server table for checkpointing
    server.entities.rows[merged.entities] = center.local_entities.rows
    return server, [center], history
