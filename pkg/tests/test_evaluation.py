"""Tests for filtered ranking and metric aggregation, including a fully
hand-enumerated toy oracle."""

import numpy as np
import pytest

from fedkge.embedding import ModelKind
from fedkge.evaluation import (
    ClientMetrics,
    MetricsReport,
    ScoringModel,
    evaluate,
    macro_average,
    metrics_from_ranks,
    micro_average,
    rank_query,
    ranks_for_triples,
)
from fedkge.kg import FilterIndex


def toy_model():
    # 5 entities on a plane, one translation relation r0 = (1, 0).
    # Tail scores for h=e0: -|| (1,0) - t ||:
    #   e0 -> -1, e1 -> 0, e2 -> -sqrt(2), e3 -> -1, e4 -> -1
    entities = np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]]
    )
    relations = np.array([[1.0, 0.0]])
    return ScoringModel(ModelKind.TRANSE, entities, relations)


TOY_TRIPLES = np.array([[0, 0, 1], [0, 0, 3]])
TOY_FILTER = FilterIndex(TOY_TRIPLES)
ALL5 = np.arange(5)


class TestRankQuery:
    def test_unique_best_is_rank_one(self):
        rank = rank_query(toy_model(), (0, 0, 1), "tail", ALL5, TOY_FILTER)
        assert rank == 1

    def test_tail_tie_handling_hand_oracle(self):
        # Query (0, r0, ?3): e1 (score 0) is another known tail, removed.
        # Remaining {e0, e2, e3, e4} score (-1, -sqrt2, -1, -1): no candidate
        # strictly higher, two ties besides the answer -> 1 + 0 + 1 = 2.
        rank = rank_query(toy_model(), (0, 0, 3), "tail", ALL5, TOY_FILTER)
        assert rank == 2

    def test_head_queries_hand_oracle(self):
        # Query (?, r0, 1): head scores -||h|| = (0, -1, -1, -sqrt2, -2);
        # answer e0 already best -> rank 1.
        assert rank_query(toy_model(), (0, 0, 1), "head", ALL5, TOY_FILTER) == 1
        # Query (?, r0, 3): head scores -||h - (0,1)||:
        # (-1, -sqrt2, 0, -1, -sqrt5); e2 strictly higher, e3 tied ->
        # 1 + 1 + floor(1/2) = 2.
        assert rank_query(toy_model(), (0, 0, 3), "head", ALL5, TOY_FILTER) == 2

    def test_lowest_rank_unfiltered(self):
        entities = np.array([[0.0], [5.0], [1.0]])
        relations = np.array([[0.0]])
        model = ScoringModel(ModelKind.TRANSE, entities, relations)
        # query (1, r0, ?0): scores -|5 - t|: e0 -> -5, e1 -> 0, e2 -> -4
        empty = FilterIndex(np.empty((0, 3), dtype=np.int64))
        assert rank_query(model, (1, 0, 0), "tail", np.arange(3), empty) == 3

    def test_missing_answer_errors(self):
        with pytest.raises(ValueError, match="missing from candidates"):
            rank_query(toy_model(), (0, 0, 1), "tail", np.array([0, 2, 3]), TOY_FILTER)

    def test_bad_direction(self):
        with pytest.raises(ValueError, match="head or tail"):
            rank_query(toy_model(), (0, 0, 1), "sideways", ALL5, TOY_FILTER)

    def test_filtering_never_hurts(self):
        rng = np.random.default_rng(0)
        entities = rng.normal(size=(8, 4))
        relations = rng.normal(size=(2, 4))
        model = ScoringModel(ModelKind.TRANSE, entities, relations)
        triples = np.unique(rng.integers(0, 8, (25, 3)) % [8, 2, 8], axis=0)
        full = FilterIndex(triples)
        empty = FilterIndex(np.empty((0, 3), dtype=np.int64))
        for h, r, t in triples.tolist():
            filtered = rank_query(model, (h, r, t), "tail", np.arange(8), full)
            raw = rank_query(model, (h, r, t), "tail", np.arange(8), empty)
            assert filtered <= raw

    def test_rank_invariant_under_monotone_score_map(self):
        # scaling every table by c > 0 scales translation scores by c
        model = toy_model()
        scaled = ScoringModel(
            model.kind, 3.0 * model.entities, 3.0 * model.relations
        )
        for triple in TOY_TRIPLES.tolist():
            for d in ("head", "tail"):
                assert rank_query(model, triple, d, ALL5, TOY_FILTER) == rank_query(
                    scaled, triple, d, ALL5, TOY_FILTER
                )


class TestRanksForTriples:
    def test_matches_single_queries(self):
        model = toy_model()
        ranks = ranks_for_triples(model, TOY_TRIPLES, ALL5, TOY_FILTER)
        single = [
            rank_query(model, tr, d, ALL5, TOY_FILTER)
            for d in ("tail", "head")
            for tr in TOY_TRIPLES.tolist()
        ]
        assert ranks.tolist() == single

    def test_chunking_boundary(self):
        rng = np.random.default_rng(1)
        entities = rng.normal(size=(20, 4))
        relations = rng.normal(size=(3, 4))
        model = ScoringModel(ModelKind.COMPLEX, entities, relations)
        triples = np.unique(rng.integers(0, 20, (70, 3)) % [20, 3, 20], axis=0)
        fidx = FilterIndex(triples)
        ranks = ranks_for_triples(model, triples, np.arange(20), fidx)
        assert len(ranks) == 2 * len(triples)
        single = [
            rank_query(model, tr, d, np.arange(20), fidx)
            for d in ("tail", "head")
            for tr in triples.tolist()
        ]
        assert ranks.tolist() == single


class TestMetrics:
    def test_all_rank_one(self):
        m = metrics_from_ranks(np.array([1, 1, 1]))
        assert (m.hits1, m.hits3, m.hits10, m.mrr) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_arithmetic(self):
        m = metrics_from_ranks(np.array([1, 4]))
        assert m.hits1 == 0.5
        assert m.hits3 == 0.5
        assert m.hits10 == 1.0
        assert m.mrr == pytest.approx(0.625)
        assert m.n_queries == 2

    def test_ordering_invariants(self):
        rng = np.random.default_rng(2)
        ranks = rng.integers(1, 40, 100)
        m = metrics_from_ranks(ranks)
        assert m.hits1 <= m.hits3 <= m.hits10
        assert m.hits1 <= m.mrr <= 1.0

    def test_empty(self):
        m = metrics_from_ranks(np.array([], dtype=np.int64))
        assert m.n_queries == 0 and m.mrr == 0.0

    def test_evaluate_pools_both_directions(self):
        m = evaluate(toy_model(), TOY_TRIPLES, ALL5, TOY_FILTER)
        # ranks: tails (1, 2), heads (1, 2)
        assert m.n_queries == 4
        assert m.hits1 == 0.5
        assert m.mrr == pytest.approx((1 + 0.5 + 1 + 0.5) / 4)

    def test_order_independence(self):
        rng = np.random.default_rng(3)
        entities = rng.normal(size=(10, 4))
        relations = rng.normal(size=(2, 4))
        model = ScoringModel(ModelKind.ROTATE, entities, rng.normal(size=(2, 2)))
        triples = np.unique(rng.integers(0, 10, (15, 3)) % [10, 2, 10], axis=0)
        fidx = FilterIndex(triples)
        a = evaluate(model, triples, np.arange(10), fidx)
        b = evaluate(model, triples[::-1], np.arange(10), fidx)
        assert a == b


class TestAggregation:
    def test_macro_of_identical_is_identity(self):
        m = ClientMetrics(0.2, 0.4, 0.6, 0.35, 50)
        agg = macro_average({0: m, 1: m, 2: m})
        assert agg.hits1 == pytest.approx(0.2)
        assert agg.mrr == pytest.approx(0.35)
        assert agg.n_queries == 150

    def test_macro_is_unweighted(self):
        a = ClientMetrics(1.0, 1.0, 1.0, 1.0, 10)
        b = ClientMetrics(0.0, 0.0, 0.0, 0.0, 990)
        agg = macro_average({0: a, 1: b})
        assert agg.mrr == pytest.approx(0.5)

    def test_micro_is_weighted(self):
        a = ClientMetrics(1.0, 1.0, 1.0, 1.0, 10)
        b = ClientMetrics(0.0, 0.0, 0.0, 0.0, 990)
        agg = micro_average({0: a, 1: b})
        assert agg.mrr == pytest.approx(0.01)

    def test_report_from_clients(self):
        a = ClientMetrics(0.5, 0.5, 1.0, 0.625, 2)
        b = ClientMetrics(1.0, 1.0, 1.0, 1.0, 6)
        rep = MetricsReport.from_clients({0: a, 1: b})
        assert rep.macro.mrr == pytest.approx(0.8125)
        assert rep.micro.mrr == pytest.approx((0.625 * 2 + 1.0 * 6) / 8)
        assert rep.clients[0] == a
