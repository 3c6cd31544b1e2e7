"""Filtered link-prediction ranking and Hits@N / MRR aggregation.

Evaluation is per client: the candidate pool is the client's own entity
set and filtering uses the client's own known triples. Metrics are kept
as fractions in [0, 1]; report writers multiply by 100.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from fedkge.embedding import ModelKind, score
from fedkge.kg import FilterIndex

_QUERY_CHUNK = 64  # queries scored per broadcast block


@dataclass(frozen=True)
class ScoringModel:
    """Frozen embedding rows used for one evaluation pass.

    ``entities`` supplies both query endpoints and candidates, so swapping
    in a different entity matrix (for example server-aggregated rows) while
    keeping the client's relations evaluates that composition.
    """

    kind: ModelKind
    entities: np.ndarray
    relations: np.ndarray


@dataclass(frozen=True)
class ClientMetrics:
    hits1: float
    hits3: float
    hits10: float
    mrr: float
    n_queries: int


def _rank_from_scores(
    cand_scores: np.ndarray,
    candidates: np.ndarray,
    answer: int,
    known: frozenset[int] | set[int],
) -> int:
    """Filtered rank of ``answer`` among scored candidates.

    Candidates forming other known-true triples are removed; the answer
    itself always stays. Rank = 1 + #strictly-higher + floor(#ties / 2),
    ties counted excluding the answer.
    """
    keep = np.ones(len(candidates), dtype=bool)
    if known:
        drop = np.fromiter((c in known for c in candidates.tolist()), dtype=bool)
        keep = ~drop
    self_pos = candidates == answer
    if not self_pos.any():
        raise ValueError(f"true answer {answer} missing from candidates")
    keep |= self_pos
    scores = cand_scores[keep]
    s_true = cand_scores[self_pos][0]
    higher = int((scores > s_true).sum())
    equal = int((scores == s_true).sum()) - 1
    return 1 + higher + equal // 2


def rank_query(
    model: ScoringModel,
    triple,
    direction: str,
    candidates: np.ndarray,
    filter_index: FilterIndex,
) -> int:
    """Filtered rank of one head or tail completion query."""
    h, r, t = (int(x) for x in triple)
    candidates = np.asarray(candidates, dtype=np.int64)
    cand_rows = model.entities[candidates]
    r_row = model.relations[r]
    if direction == "tail":
        scores = score(model.kind, model.entities[h], r_row, cand_rows)
        known = filter_index.tails(h, r)
        answer = t
    elif direction == "head":
        scores = score(model.kind, cand_rows, r_row, model.entities[t])
        known = filter_index.heads(r, t)
        answer = h
    else:
        raise ValueError(f"direction must be head or tail, got {direction!r}")
    return _rank_from_scores(scores, candidates, answer, known)


def ranks_for_triples(
    model: ScoringModel,
    triples: np.ndarray,
    candidates: np.ndarray,
    filter_index: FilterIndex,
    directions: tuple[str, ...] = ("tail", "head"),
) -> np.ndarray:
    """Filtered ranks for every (triple, direction) query, pooled.

    Scores are computed in chunked broadcasts; results do not depend on
    chunking or on triple order beyond the output ordering (tail ranks for
    all triples, then head ranks).
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    candidates = np.asarray(candidates, dtype=np.int64)
    cand_rows = model.entities[candidates]
    out: list[int] = []
    for direction in directions:
        for lo in range(0, len(triples), _QUERY_CHUNK):
            block = triples[lo : lo + _QUERY_CHUNK]
            r_rows = model.relations[block[:, 1]]
            if direction == "tail":
                s = score(
                    model.kind,
                    model.entities[block[:, 0]][:, None, :],
                    r_rows[:, None, :],
                    cand_rows[None, :, :],
                )
            else:
                s = score(
                    model.kind,
                    cand_rows[None, :, :],
                    r_rows[:, None, :],
                    model.entities[block[:, 2]][:, None, :],
                )
            for i, (h, r, t) in enumerate(block.tolist()):
                if direction == "tail":
                    known, answer = filter_index.tails(h, r), t
                else:
                    known, answer = filter_index.heads(r, t), h
                out.append(_rank_from_scores(s[i], candidates, answer, known))
    return np.asarray(out, dtype=np.int64)


def metrics_from_ranks(ranks: np.ndarray) -> ClientMetrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        return ClientMetrics(0.0, 0.0, 0.0, 0.0, 0)
    return ClientMetrics(
        hits1=float((ranks <= 1).mean()),
        hits3=float((ranks <= 3).mean()),
        hits10=float((ranks <= 10).mean()),
        mrr=float((1.0 / ranks).mean()),
        n_queries=int(ranks.size),
    )


def evaluate(
    model: ScoringModel,
    test_triples: np.ndarray,
    candidates: np.ndarray,
    filter_index: FilterIndex,
) -> ClientMetrics:
    """Rank head and tail queries for every test triple, pooled."""
    ranks = ranks_for_triples(model, test_triples, candidates, filter_index)
    return metrics_from_ranks(ranks)


def macro_average(per_client: Mapping[int, ClientMetrics]) -> ClientMetrics:
    """Unweighted mean over clients (the headline aggregate)."""
    ms = list(per_client.values())
    if not ms:
        return ClientMetrics(0.0, 0.0, 0.0, 0.0, 0)
    k = len(ms)
    return ClientMetrics(
        hits1=sum(m.hits1 for m in ms) / k,
        hits3=sum(m.hits3 for m in ms) / k,
        hits10=sum(m.hits10 for m in ms) / k,
        mrr=sum(m.mrr for m in ms) / k,
        n_queries=sum(m.n_queries for m in ms),
    )


def micro_average(per_client: Mapping[int, ClientMetrics]) -> ClientMetrics:
    """Query-count-weighted mean over clients."""
    ms = list(per_client.values())
    total = sum(m.n_queries for m in ms)
    if total == 0:
        return ClientMetrics(0.0, 0.0, 0.0, 0.0, 0)
    return ClientMetrics(
        hits1=sum(m.hits1 * m.n_queries for m in ms) / total,
        hits3=sum(m.hits3 * m.n_queries for m in ms) / total,
        hits10=sum(m.hits10 * m.n_queries for m in ms) / total,
        mrr=sum(m.mrr * m.n_queries for m in ms) / total,
        n_queries=total,
    )


@dataclass(frozen=True)
class MetricsReport:
    """Per-client metrics plus their macro and micro aggregates."""

    clients: dict[int, ClientMetrics]
    macro: ClientMetrics
    micro: ClientMetrics

    @classmethod
    def from_clients(cls, per_client: Mapping[int, ClientMetrics]) -> "MetricsReport":
        return cls(
            clients=dict(per_client),
            macro=macro_average(per_client),
            micro=micro_average(per_client),
        )
