"""Federated training loop: mappings, aggregation, round mechanics."""

import numpy as np
import pytest

from fedkge.federation import (
    ClientShard,
    EntityMapping,
    RoundConfig,
    ServerState,
    aggregate,
    clone_client_state,
    distribute_avatar,
    evaluate_clients,
    init_client_state,
    local_round,
    localize_shard,
    make_mappings,
    merge_client_shards,
    run_federated_training,
    write_history_csv,
)
from fedkge.embedding import EmbeddingTable, ModelKind, init_table
from fedkge.kg import KnowledgeGraph, SplitDataset, FilterIndex
from fedkge.losses import LossWeights
from fedkge.partition import distribute, random_partition
from fedkge.synthetic import SyntheticSpec, synthetic_graph


def toy_graph(n_entities=60, n_relations=6, n_triples=420, seed=11):
    rng = np.random.default_rng(seed)
    triples = np.stack(
        [
            rng.integers(0, n_entities, n_triples),
            rng.integers(0, n_relations, n_triples),
            rng.integers(0, n_entities, n_triples),
        ],
        axis=1,
    ).astype(np.int64)
    triples = np.unique(triples, axis=0)
    return KnowledgeGraph(triples, n_entities, n_relations)


def toy_shards(k=2, seed=11, **kw):
    kg = toy_graph(seed=seed, **kw)
    labels = random_partition(kg.n_relations, k, seed=seed)
    shard_graphs = distribute(kg, labels, k)
    return [localize_shard(i, g, seed=0) for i, g in enumerate(shard_graphs)]


def desk_config(**overrides):
    base = dict(
        model=ModelKind.TRANSE,
        dim=8,
        rounds=2,
        local_epochs=1,
        batch_size=64,
        n_negatives=8,
        lr=1e-2,
        margin=2.0,
        eval_interval=1,
        patience=3,
        seed=0,
    )
    base.update(overrides)
    return RoundConfig(**base)


# ---------------------------------------------------------------------------
# localization


def test_localize_shard_roundtrip():
    shards = toy_shards(k=2)
    kg = toy_graph()
    all_triples = {tuple(t) for t in kg.triples}
    for s in shards:
        assert np.all(np.diff(s.entities) > 0)
        assert np.all(np.diff(s.relations) > 0)
        back = s.to_global(s.splits.all_triples())
        assert {tuple(t) for t in back} <= all_triples
        n = len(s.splits.all_triples())
        assert len(s.splits.train) == int(n * 0.8)
        assert len(s.splits.valid) == int(n * 0.1)


def test_localize_is_deterministic():
    kg = toy_graph()
    labels = random_partition(kg.n_relations, 2, seed=3)
    g = distribute(kg, labels, 2)[0]
    a = localize_shard(0, g, seed=5)
    b = localize_shard(0, g, seed=5)
    assert np.array_equal(a.splits.train, b.splits.train)
    c = localize_shard(0, g, seed=6)
    assert not np.array_equal(a.splits.train, c.splits.train)


def test_local_ids_are_dense():
    for s in toy_shards(k=3):
        trip = s.splits.all_triples()
        ents = np.unique(np.concatenate([trip[:, 0], trip[:, 2]]))
        assert ents.max() < s.n_entities
        assert trip[:, 1].max() < s.n_relations


# ---------------------------------------------------------------------------
# mappings and aggregation


def test_make_mappings_counts():
    shards = toy_shards(k=3)
    mapping = make_mappings(shards)
    n_global = shards[0].n_global_entities
    expect = np.zeros(n_global, dtype=np.int64)
    for s in shards:
        expect[s.entities] += 1
    assert np.array_equal(mapping.counts, expect)
    assert mapping.overlap_entities == int((expect >= 2).sum())


def test_distribute_avatar_is_a_copy():
    shards = toy_shards(k=2)
    mapping = make_mappings(shards)
    server = ServerState(entities=init_table(mapping.n_global, ModelKind.TRANSE, "entity", 4, 0))
    av = distribute_avatar(server, mapping, 0)
    assert np.array_equal(av, server.entities.rows[mapping.locals_to_global[0]])
    av += 1.0
    assert np.array_equal(
        server.entities.rows[mapping.locals_to_global[0]], av - 1.0
    )


def brute_force_aggregate(avatars, mapping, previous):
    out = previous.copy()
    for g in range(len(previous)):
        rows = []
        for k, av in avatars.items():
            local = np.flatnonzero(mapping.locals_to_global[k] == g)
            if len(local):
                rows.append(av[local[0]])
        if rows:
            out[g] = np.mean(rows, axis=0)
    return out


def test_aggregate_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n_global = int(rng.integers(4, 30))
        k = int(rng.integers(1, 5))
        dim = int(rng.integers(1, 6))
        maps = []
        for _ in range(k):
            size = int(rng.integers(1, n_global + 1))
            maps.append(np.sort(rng.choice(n_global, size=size, replace=False)))
        mapping = EntityMapping(maps, np.zeros(n_global, dtype=np.int64), n_global)
        sampled = sorted(
            rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False).tolist()
        )
        avatars = {j: rng.normal(size=(len(maps[j]), dim)) for j in sampled}
        previous = rng.normal(size=(n_global, dim))
        got = aggregate(avatars, mapping, previous)
        want = brute_force_aggregate(avatars, mapping, previous)
        assert np.max(np.abs(got - want)) < 1e-12


def test_aggregate_untouched_rows_keep_previous():
    maps = [np.array([0, 2]), np.array([2, 3])]
    mapping = EntityMapping(maps, np.array([1, 0, 2, 1]), 4)
    previous = np.arange(8, dtype=np.float64).reshape(4, 2)
    avatars = {0: np.ones((2, 2))}
    out = aggregate(avatars, mapping, previous)
    assert np.array_equal(out[0], [1, 1])
    assert np.array_equal(out[2], [1, 1])  # count over sampled subset only
    assert np.array_equal(out[1], previous[1])
    assert np.array_equal(out[3], previous[3])


def test_distribute_then_aggregate_is_fixed_point():
    shards = toy_shards(k=3)
    mapping = make_mappings(shards)
    server = ServerState(entities=init_table(mapping.n_global, ModelKind.TRANSE, "entity", 6, 1))
    avatars = {k: distribute_avatar(server, mapping, k) for k in range(3)}
    out = aggregate(avatars, mapping, server.entities.rows)
    assert np.allclose(out, server.entities.rows, atol=1e-12)


# ---------------------------------------------------------------------------
# config and state


def test_round_config_validation():
    with pytest.raises(ValueError, match="fraction"):
        RoundConfig(fraction=0.0)
    with pytest.raises(ValueError, match="fraction"):
        RoundConfig(fraction=1.5)
    with pytest.raises(ValueError, match="local_epochs"):
        RoundConfig(local_epochs=0)
    with pytest.raises(ValueError, match="batch_size"):
        RoundConfig(batch_size=0)
    with pytest.raises(ValueError, match="workers"):
        RoundConfig(workers=0)


def test_init_client_state_deterministic_and_distinct():
    shards = toy_shards(k=2)
    cfg = desk_config()
    a = init_client_state(shards[0], cfg)
    b = init_client_state(shards[0], cfg)
    assert np.array_equal(a.local_entities.rows, b.local_entities.rows)
    assert np.array_equal(a.relations.rows, b.relations.rows)
    other = init_client_state(shards[1], cfg)
    assert a.local_entities.rows.shape[1] == other.local_entities.rows.shape[1]
    assert not np.array_equal(
        a.local_entities.rows[: min(3, other.shard.n_entities)],
        other.local_entities.rows[: min(3, other.shard.n_entities)],
    )
    assert not np.any(a.global_entities.rows)  # filled by the avatar later


def test_clone_client_state_is_independent():
    shards = toy_shards(k=1, n_relations=3)
    c = init_client_state(shards[0], desk_config())
    d = clone_client_state(c)
    c.local_entities.rows += 1.0
    c.opt_local.steps += 3
    assert not np.array_equal(c.local_entities.rows, d.local_entities.rows)
    assert not np.array_equal(c.opt_local.steps, d.opt_local.steps)


# ---------------------------------------------------------------------------
# local rounds


def test_local_round_empty_train_returns_avatar_unchanged():
    shard = ClientShard(
        client_id=0,
        entities=np.array([0, 1, 2]),
        relations=np.array([0]),
        splits=SplitDataset(
            np.empty((0, 3), dtype=np.int64),
            np.empty((0, 3), dtype=np.int64),
            np.array([[0, 0, 1]], dtype=np.int64),
        ),
        filter_index=FilterIndex(np.array([[0, 0, 1]])),
        n_global_entities=3,
        n_global_relations=1,
    )
    cfg = desk_config(dim=4)
    client = init_client_state(shard, cfg)
    avatar = np.arange(12, dtype=np.float64).reshape(3, 4)
    out = local_round(client, avatar.copy(), cfg, round_idx=0, mode="fedlu")
    assert np.array_equal(out, avatar)


def test_local_round_independent_returns_none():
    shards = toy_shards(k=1, n_relations=3)
    cfg = desk_config()
    client = init_client_state(shards[0], cfg)
    assert local_round(client, None, cfg, 0, mode="independent") is None


def test_local_round_rejects_bad_avatar_shape():
    shards = toy_shards(k=1, n_relations=3)
    cfg = desk_config()
    client = init_client_state(shards[0], cfg)
    with pytest.raises(ValueError, match="avatar shape"):
        local_round(client, np.zeros((2, 2)), cfg, 0, mode="fedlu")


def test_local_round_moves_tables():
    shards = toy_shards(k=1, n_relations=3)
    cfg = desk_config()
    client = init_client_state(shards[0], cfg)
    before = client.local_entities.rows.copy()
    local_round(client, None, cfg, 0, mode="independent")
    assert not np.array_equal(client.local_entities.rows, before)


def test_rotate_relations_stay_in_phase_range():
    shards = toy_shards(k=1, n_relations=3)
    cfg = desk_config(model=ModelKind.ROTATE, lr=0.5)
    client = init_client_state(shards[0], cfg)
    local_round(client, None, cfg, 0, mode="independent")
    theta = client.relations.rows
    assert np.all(theta > -np.pi) and np.all(theta <= np.pi)


# ---------------------------------------------------------------------------
# full runs


@pytest.mark.parametrize("mode", ["fedlu", "fede", "fedprox", "independent"])
def test_run_is_reproducible(mode):
    shards = toy_shards(k=2)
    cfg = desk_config()
    s1, c1, h1 = run_federated_training(shards, cfg, mode)
    s2, c2, h2 = run_federated_training(shards, cfg, mode)
    assert np.array_equal(s1.entities.rows, s2.entities.rows)
    for a, b in zip(c1, c2):
        assert np.array_equal(a.local_entities.rows, b.local_entities.rows)
        assert np.array_equal(a.relations.rows, b.relations.rows)
    assert [r.metrics for r in h1] == [r.metrics for r in h2]


def test_zero_distill_fedlu_matches_independent_locals():
    shards = toy_shards(k=2)
    cfg = desk_config(weights=LossWeights(mu_distill=0.0, mu_soft=0.1, mu_prox=0.1))
    _, fedlu_clients, _ = run_federated_training(shards, cfg, "fedlu")
    _, indep_clients, _ = run_federated_training(shards, cfg, "independent")
    for a, b in zip(fedlu_clients, indep_clients):
        assert np.array_equal(a.local_entities.rows, b.local_entities.rows)
        assert np.array_equal(a.relations.rows, b.relations.rows)


def test_worker_count_does_not_change_results():
    shards = toy_shards(k=3)
    cfg1 = desk_config(workers=1)
    cfg3 = desk_config(workers=3)
    s1, c1, _ = run_federated_training(shards, cfg1, "fedlu")
    s3, c3, _ = run_federated_training(shards, cfg3, "fedlu")
    assert np.array_equal(s1.entities.rows, s3.entities.rows)
    for a, b in zip(c1, c3):
        assert np.array_equal(a.local_entities.rows, b.local_entities.rows)


def test_fedprox_differs_from_fede():
    shards = toy_shards(k=2)
    cfg = desk_config()
    _, fede_clients, _ = run_federated_training(shards, cfg, "fede")
    _, prox_clients, _ = run_federated_training(shards, cfg, "fedprox")
    diffs = [
        np.max(np.abs(a.local_entities.rows - b.local_entities.rows))
        for a, b in zip(fede_clients, prox_clients)
    ]
    assert max(diffs) > 0


def test_history_shape_and_macro_rows():
    shards = toy_shards(k=2)
    cfg = desk_config(rounds=2, eval_interval=1)
    _, _, history = run_federated_training(shards, cfg, "fedlu")
    valid_local = [r for r in history if r.split == "valid" and r.variant == "local"]
    # 2 rounds x (2 clients + macro)
    assert len(valid_local) == 6
    assert {r.round for r in valid_local} == {1, 2}
    macros = [r for r in valid_local if r.client_id is None]
    assert len(macros) == 2
    test_rows = [r for r in history if r.split == "test"]
    assert {r.variant for r in test_rows} == {"local", "global"}
    # independent mode records no global rows
    _, _, hist_ind = run_federated_training(shards, cfg, "independent")
    assert all(r.variant == "local" for r in hist_ind)


def test_zero_rounds_still_reports_test_metrics():
    shards = toy_shards(k=2)
    cfg = desk_config(rounds=0)
    server, _, history = run_federated_training(shards, cfg, "fedlu")
    assert server.round == 0
    assert all(r.split == "test" for r in history)
    assert all(r.round == 0 for r in history)


def test_unknown_mode_rejected():
    shards = toy_shards(k=2)
    with pytest.raises(ValueError, match="mode"):
        run_federated_training(shards, desk_config(), "fedavg")


def test_client_sampling_fraction():
    shards = toy_shards(k=3, n_relations=9, n_triples=900)
    cfg = desk_config(fraction=0.34, rounds=4, eval_interval=10)
    # max(1, round(0.34 * 3)) == 1 client per round
    server, clients, _ = run_federated_training(shards, cfg, "fedlu")
    assert server.round == 4
    trained = [
        not np.array_equal(c.global_entities.rows, np.zeros_like(c.global_entities.rows))
        for c in clients
    ]
    assert any(trained)


def test_training_improves_over_init():
    spec = SyntheticSpec(
        n_groups=2, entities_per_group=80, n_bridge=20, n_relations=6,
        triples_per_relation=90, latent_dim=4, seed=3,
    )
    kg = synthetic_graph(spec)
    labels = random_partition(kg.n_relations, 2, seed=1)
    shards = [localize_shard(i, g, seed=0) for i, g in enumerate(distribute(kg, labels, 2))]
    cfg = desk_config(rounds=8, local_epochs=2, eval_interval=8, lr=5e-2)
    clients_init = [init_client_state(s, cfg) for s in shards]
    base = evaluate_clients(clients_init, "valid", "local")
    _, clients, _ = run_federated_training(shards, cfg, "fedlu")
    trained = evaluate_clients(clients, "valid", "local")
    base_mrr = np.mean([m.mrr for m in base.values()])
    trained_mrr = np.mean([m.mrr for m in trained.values()])
    assert trained_mrr > base_mrr


# ---------------------------------------------------------------------------
# centralized


def test_centralized_runs_and_reports_per_client():
    shards = toy_shards(k=2)
    cfg = desk_config(rounds=2, eval_interval=1)
    server, states, history = run_federated_training(shards, cfg, "centralized")
    assert len(states) == 1
    cids = {r.client_id for r in history if r.client_id is not None}
    assert cids == {0, 1}
    merged = merge_client_shards(shards)
    assert np.any(server.entities.rows[merged.entities])


def test_merge_client_shards_counts():
    shards = toy_shards(k=3)
    merged = merge_client_shards(shards)
    assert len(merged.splits.train) == sum(len(s.splits.train) for s in shards)
    assert len(merged.splits.test) == sum(len(s.splits.test) for s in shards)
    ents = set()
    for s in shards:
        ents.update(s.entities.tolist())
    assert set(merged.entities.tolist()) == ents
    # merged triples map back to the same global triples
    back = {tuple(t) for t in merged.to_global(merged.splits.train)}
    want = set()
    for s in shards:
        want.update(tuple(t) for t in s.to_global(s.splits.train))
    assert back == want


# ---------------------------------------------------------------------------
# history csv


def test_write_history_csv(tmp_path):
    shards = toy_shards(k=2)
    cfg = desk_config(rounds=1, eval_interval=1)
    _, _, history = run_federated_training(shards, cfg, "fedlu")
    path = tmp_path / "history.csv"
    write_history_csv(path, history, "local")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "round,client_id,split,hits1,hits3,hits10,mrr"
    assert any(",macro," in ln for ln in lines[1:])
    first = lines[1].split(",")
    assert len(first) == 7
    assert 0.0 <= float(first[-1]) <= 100.0
