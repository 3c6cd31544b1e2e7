"""Triple ingestion, id coding, dataset splitting, and filtered-lookup indexes.

Triples are integer-coded ``(head, relation, tail)`` facts stored as rows of
an ``(n, 3)`` int64 array. Labels live in a :class:`Vocabulary`; everything
downstream works purely on ids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

HEAD, REL, TAIL = 0, 1, 2


class ParseError(ValueError):
    """A triple line that does not have exactly three tab-separated fields."""


@dataclass(frozen=True)
class Vocabulary:
    """Bijective label <-> id maps for entities and relations.

    Ids are dense in ``[0, count)`` and assigned in first-appearance order.
    """

    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    entity_to_id: dict[str, int] = field(repr=False)
    relation_to_id: dict[str, int] = field(repr=False)

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)


@dataclass(frozen=True)
class KnowledgeGraph:
    """A duplicate-free collection of id-coded triples.

    ``n_entities`` / ``n_relations`` give the size of the id space the
    triples are coded in (a shard of a larger graph keeps the global sizes).
    """

    triples: np.ndarray  # (n, 3) int64
    n_entities: int
    n_relations: int

    def __post_init__(self) -> None:
        t = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "triples", t)

    def __len__(self) -> int:
        return len(self.triples)

    def entity_ids(self) -> np.ndarray:
        """Sorted ids of the entities that actually appear in the triples."""
        return np.unique(self.triples[:, [HEAD, TAIL]])

    def relation_ids(self) -> np.ndarray:
        """Sorted ids of the relations that actually appear in the triples."""
        return np.unique(self.triples[:, REL])


@dataclass(frozen=True)
class SplitDataset:
    """Disjoint train/valid/test triple arrays that partition a source set."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)


class FilterIndex:
    """Lookup of known-true completions over a client's full triple set.

    ``tails(h, r)`` is the set of tails t with (h, r, t) known true, and
    ``heads(r, t)`` the converse; absent keys return the empty set. Used both
    for filtered ranking and for negative-sample rejection.
    """

    def __init__(self, triples: np.ndarray):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        tails: dict[tuple[int, int], set[int]] = {}
        heads: dict[tuple[int, int], set[int]] = {}
        for h, r, t in triples.tolist():
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
        self._tails = tails
        self._heads = heads
        self.n_triples = len(triples)

    _EMPTY: frozenset[int] = frozenset()

    def tails(self, head: int, relation: int) -> frozenset[int] | set[int]:
        return self._tails.get((int(head), int(relation)), self._EMPTY)

    def heads(self, relation: int, tail: int) -> frozenset[int] | set[int]:
        return self._heads.get((int(relation), int(tail)), self._EMPTY)

    def contains(self, head: int, relation: int, tail: int) -> bool:
        return int(tail) in self.tails(head, relation)


def _iter_lines(source: str | Path | Iterable[str]) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def load_triples(source: str | Path | Iterable[str]) -> tuple[KnowledgeGraph, Vocabulary]:
    """Read tab-separated ``head relation tail`` lines into an id-coded graph.

    Ids are assigned in first-appearance order. Blank lines are ignored and
    duplicate triples are dropped (logged with a count). A line with the
    wrong field count raises :class:`ParseError` naming the line number.
    """
    ent_to_id: dict[str, int] = {}
    rel_to_id: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0

    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        h_label, r_label, t_label = fields
        h = ent_to_id.setdefault(h_label, len(ent_to_id))
        r = rel_to_id.setdefault(r_label, len(rel_to_id))
        t = ent_to_id.setdefault(t_label, len(ent_to_id))
        key = (h, r, t)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        rows.append(key)

    if duplicates:
        log.warning("dropped %d duplicate triple(s)", duplicates)

    triples = np.array(rows, dtype=np.int64).reshape(-1, 3)
    vocab = Vocabulary(
        entity_labels=tuple(ent_to_id),
        relation_labels=tuple(rel_to_id),
        entity_to_id=ent_to_id,
        relation_to_id=rel_to_id,
    )
    kg = KnowledgeGraph(triples, n_entities=len(ent_to_id), n_relations=len(rel_to_id))
    return kg, vocab


def read_triples(
    source: str | Path | Iterable[str], vocab: Vocabulary
) -> np.ndarray:
    """Read label TSV triples under an existing vocabulary.

    Returns id-coded rows in file order, duplicates included; a label the
    vocabulary does not know raises :class:`ParseError` naming the line.
    """
    rows: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        h_label, r_label, t_label = fields
        try:
            h = vocab.entity_to_id[h_label]
            t = vocab.entity_to_id[t_label]
        except KeyError as exc:
            raise ParseError(f"line {lineno}: unknown entity {exc.args[0]!r}") from None
        if r_label not in vocab.relation_to_id:
            raise ParseError(f"line {lineno}: unknown relation {r_label!r}")
        rows.append((h, vocab.relation_to_id[r_label], t))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def write_triples(path: str | Path, triples: np.ndarray, vocab: Vocabulary) -> None:
    """Write id-coded triples back to label TSV (inverse of :func:`load_triples`)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in triples.tolist():
            fh.write(
                f"{vocab.entity_labels[h]}\t{vocab.relation_labels[r]}\t{vocab.entity_labels[t]}\n"
            )


def dump_vocabulary(vocab: Vocabulary, entity_path: str | Path, relation_path: str | Path) -> None:
    """Write ``label<TAB>id`` dumps for entities and relations."""
    with open(entity_path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(vocab.entity_labels):
            fh.write(f"{label}\t{i}\n")
    with open(relation_path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(vocab.relation_labels):
            fh.write(f"{label}\t{i}\n")


def load_vocabulary(entity_path: str | Path, relation_path: str | Path) -> Vocabulary:
    """Read vocabulary dumps written by :func:`dump_vocabulary`."""

    def read(path: str | Path) -> list[str]:
        labels: dict[int, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                label, idx = line.rsplit("\t", 1)
                labels[int(idx)] = label
        return [labels[i] for i in range(len(labels))]

    ents = read(entity_path)
    rels = read(relation_path)
    return Vocabulary(
        entity_labels=tuple(ents),
        relation_labels=tuple(rels),
        entity_to_id={label: i for i, label in enumerate(ents)},
        relation_to_id={label: i for i, label in enumerate(rels)},
    )


def split_dataset(
    kg: KnowledgeGraph | np.ndarray,
    ratios: tuple[float, float, float] = (8, 1, 1),
    seed: int = 0,
) -> SplitDataset:
    """Shuffle and cut triples into train/valid/test at the given ratios.

    Sizes are ``floor(r_train * n)`` / ``floor(r_valid * n)`` / remainder,
    with the shuffle a deterministic function of ``seed``.
    """
    triples = kg.triples if isinstance(kg, KnowledgeGraph) else np.asarray(kg)
    triples = triples.reshape(-1, 3)
    n = len(triples)
    if n < 3:
        raise ValueError(f"need at least 3 triples to split, got {n}")
    total = float(sum(ratios))
    n_train = int(np.floor(ratios[0] / total * n))
    n_valid = int(np.floor(ratios[1] / total * n))
    order = np.random.default_rng(seed).permutation(n)
    shuffled = triples[order]
    return SplitDataset(
        train=shuffled[:n_train].copy(),
        valid=shuffled[n_train : n_train + n_valid].copy(),
        test=shuffled[n_train + n_valid :].copy(),
    )


def build_filter_index(splits: SplitDataset) -> FilterIndex:
    """Index every triple in train + valid + test for filtered lookups."""
    return FilterIndex(splits.all_triples())
