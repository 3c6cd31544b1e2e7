"""Generator invariants for the latent-structure synthetic graphs."""

import numpy as np
import pytest

from fedkge.synthetic import SyntheticSpec, relation_groups, synthetic_graph, _group_pool


SMALL = SyntheticSpec(
    n_groups=2, entities_per_group=40, n_bridge=10, n_relations=5,
    triples_per_relation=60, latent_dim=4, seed=1,
)


def test_spec_validation():
    with pytest.raises(ValueError, match="relation per group"):
        SyntheticSpec(n_groups=4, n_relations=3)
    with pytest.raises(ValueError, match="noise"):
        SyntheticSpec(noise=1.0)
    with pytest.raises(ValueError, match="tail_pool"):
        SyntheticSpec(tail_pool=0)
    with pytest.raises(ValueError, match="bridge_drift"):
        SyntheticSpec(bridge_drift=-0.1)


def test_entity_count():
    assert SMALL.n_entities == 2 * 40 + 10
    assert SyntheticSpec().n_entities == 3 * 620 + 140


def test_relation_groups_are_contiguous_blocks():
    g = relation_groups(SMALL)
    assert len(g) == 5
    assert np.all(np.diff(g) >= 0)
    assert set(g.tolist()) == {0, 1}
    g3 = relation_groups(SyntheticSpec())
    assert set(g3.tolist()) == {0, 1, 2}


def test_graph_is_deterministic():
    a = synthetic_graph(SMALL)
    b = synthetic_graph(SMALL)
    assert np.array_equal(a.triples, b.triples)
    c = synthetic_graph(SyntheticSpec(**{**SMALL.__dict__, "seed": 2}))
    assert not np.array_equal(a.triples, c.triples)


def test_triples_stay_inside_group_pools():
    kg = synthetic_graph(SMALL)
    groups = relation_groups(SMALL)
    for r in range(SMALL.n_relations):
        pool = set(_group_pool(SMALL, groups[r]).tolist())
        sub = kg.triples[kg.triples[:, 1] == r]
        assert len(sub) > 0
        assert set(sub[:, 0].tolist()) <= pool
        assert set(sub[:, 2].tolist()) <= pool


def test_no_self_loops_without_noise():
    spec = SyntheticSpec(**{**SMALL.__dict__, "noise": 0.0})
    kg = synthetic_graph(spec)
    assert np.all(kg.triples[:, 0] != kg.triples[:, 2])


def test_bridge_drift_changes_triples_not_structure():
    spec = SyntheticSpec(**{**SMALL.__dict__, "bridge_drift": 1.5})
    kg = synthetic_graph(spec)
    assert not np.array_equal(kg.triples, synthetic_graph(SMALL).triples)
    groups = relation_groups(spec)
    for r in range(spec.n_relations):
        pool = set(_group_pool(spec, groups[r]).tolist())
        sub = kg.triples[kg.triples[:, 1] == r]
        assert set(sub[:, 0].tolist()) <= pool
        assert set(sub[:, 2].tolist()) <= pool


def test_ids_in_range():
    kg = synthetic_graph(SMALL)
    assert kg.triples[:, [0, 2]].max() < SMALL.n_entities
    assert kg.triples[:, 1].max() < SMALL.n_relations
    assert kg.triples.min() >= 0
