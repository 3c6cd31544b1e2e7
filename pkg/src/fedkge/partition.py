"""Relation-clustering shard construction and shard statistics.

Builds heterogeneous federated datasets: relations are clustered by how
often they co-occur on entities (spectral clustering of the co-occurrence
graph), and every triple follows its relation into that cluster's shard.
A seeded random relation partition is provided as the homogeneous control.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fedkge.kg import HEAD, REL, TAIL, KnowledgeGraph


def build_cooccurrence(kg: KnowledgeGraph, workers: int = 1) -> np.ndarray:
    """Count, for each relation pair, the entities incident to both.

    Incidence is set-valued: an entity touching r1 through many triples
    still counts once toward M[r1, r2]. The result is a dense symmetric
    (|R|, |R|) int64 matrix with a zero diagonal. Worker count only chunks
    the accumulation; the result is independent of it.
    """
    n_rel = kg.n_relations
    if n_rel < 1:
        raise ValueError("graph has no relations")
    incidence = np.zeros((kg.n_entities, n_rel), dtype=np.float64)
    t = kg.triples
    incidence[t[:, HEAD], t[:, REL]] = 1.0
    incidence[t[:, TAIL], t[:, REL]] = 1.0

    if workers <= 1 or kg.n_entities < 2 * workers:
        m = incidence.T @ incidence
    else:
        chunks = np.array_split(incidence, workers, axis=0)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: b.T @ b, chunks))
        m = np.sum(parts, axis=0)
    m = np.rint(m).astype(np.int64)
    np.fill_diagonal(m, 0)
    return m


def laplacian(m: np.ndarray) -> np.ndarray:
    """Unnormalized graph Laplacian L = D - M (rows of L sum to zero)."""
    m = np.asarray(m, dtype=np.float64)
    return np.diag(m.sum(axis=1)) - m


def kmeans(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Plain k-means with k-means++ seeding and deterministic tie handling.

    Nearest-centroid ties go to the lowest cluster id. Runs at most 100
    iterations, stopping once assignments are fixed. A cluster left empty
    by an assignment step is repaired by moving the point farthest from
    its centroid in the largest cluster.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    rng = np.random.default_rng(seed)

    # k-means++: start uniformly, then sample proportionally to the squared
    # distance to the nearest chosen center.
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = points[idx]
        closest = np.minimum(closest, ((points - centers[i]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(100):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)  # argmin picks the lowest id on ties

        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            donor = int(np.argmax(counts))
            members = np.flatnonzero(new_labels == donor)
            centroid = points[members].mean(axis=0)
            far = members[np.argmax(((points[members] - centroid) ** 2).sum(axis=1))]
            new_labels[far] = empty
            counts[donor] -= 1
            counts[empty] += 1

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    return labels


def spectral_partition(m: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Cluster relations by spectral embedding of the co-occurrence graph.

    Takes the eigenvectors of the k smallest eigenvalues of L = D - M as
    columns of the embedding S (one row per relation) and k-means the rows.
    Returns int64 labels in [0, k); every cluster is non-empty.
    """
    m = np.asarray(m)
    n_rel = m.shape[0]
    if not 1 <= k <= n_rel:
        raise ValueError(f"need 1 <= k <= {n_rel} relations, got k={k}")
    eigvals, eigvecs = np.linalg.eigh(laplacian(m))
    order = np.argsort(eigvals)[:k]
    s = eigvecs[:, order]
    return kmeans(s, k, seed)


def random_partition(n_relations: int, k: int, seed: int) -> np.ndarray:
    """Deal shuffled relation ids round-robin into k clusters.

    Cluster sizes differ by at most one.
    """
    if not 1 <= k <= n_relations:
        raise ValueError(f"need 1 <= k <= {n_relations} relations, got k={k}")
    order = np.random.default_rng(seed).permutation(n_relations)
    labels = np.empty(n_relations, dtype=np.int64)
    labels[order] = np.arange(n_relations) % k
    return labels


def distribute(kg: KnowledgeGraph, labels: np.ndarray, k: int | None = None) -> list[KnowledgeGraph]:
    """Split a graph into per-client shards by relation cluster.

    Each triple lands in the shard owning its relation, so shards are
    triple- and relation-disjoint and their union is the input. Entity
    sets may overlap. Every relation of the graph must be labeled and no
    shard may come out empty; both violations raise ValueError. Shards
    keep the global entity/relation id space.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) < kg.n_relations:
        raise ValueError(
            f"clustering labels {len(labels)} relations but graph has {kg.n_relations}"
        )
    if np.any(labels < 0):
        raise ValueError("negative cluster label")
    if k is None:
        k = int(labels.max()) + 1

    shards = []
    rel = kg.triples[:, REL]
    for c in range(k):
        mask = labels[rel] == c
        if not mask.any():
            raise ValueError(f"cluster {c} received no triples")
        shards.append(
            KnowledgeGraph(kg.triples[mask], kg.n_entities, kg.n_relations)
        )
    return shards


@dataclass(frozen=True)
class ShardStatsRow:
    shard_id: int
    n_relations: int
    n_entities: int
    n_triples: int
    avg_degree: float
    avg_clustering: float


@dataclass(frozen=True)
class ShardStats:
    shards: list[ShardStatsRow]
    overlap_entities: int  # entities present in at least two shards


def degree_counts(shard: KnowledgeGraph) -> dict[int, int]:
    """Incident triple count per entity (multigraph degree), entity -> count."""
    ids, counts = np.unique(shard.triples[:, [HEAD, TAIL]], return_counts=True)
    # a self-loop triple is one incident triple, not two
    loops = shard.triples[:, HEAD] == shard.triples[:, TAIL]
    if loops.any():
        loop_ids, loop_counts = np.unique(shard.triples[loops, HEAD], return_counts=True)
        adjust = dict(zip(loop_ids.tolist(), loop_counts.tolist()))
        return {
            int(e): int(c) - adjust.get(int(e), 0) for e, c in zip(ids, counts)
        }
    return {int(e): int(c) for e, c in zip(ids, counts)}


def degree_histogram(shard: KnowledgeGraph) -> np.ndarray:
    """Histogram over degrees: index d holds the number of entities of degree d."""
    degs = list(degree_counts(shard).values())
    if not degs:
        return np.zeros(1, dtype=np.int64)
    return np.bincount(np.asarray(degs, dtype=np.int64))


def average_clustering(shard: KnowledgeGraph) -> float:
    """Mean local clustering coefficient over the shard's entities.

    Computed on the simple undirected projection: direction, parallel
    edges, and self-loops dropped. Entities with fewer than two neighbours
    contribute zero.
    """
    adj: dict[int, set[int]] = {}
    for h, _, t in shard.triples.tolist():
        if h == t:
            continue
        adj.setdefault(h, set()).add(t)
        adj.setdefault(t, set()).add(h)
    entities = shard.entity_ids()
    if entities.size == 0:
        return 0.0
    total = 0.0
    for e in entities.tolist():
        neigh = adj.get(e, ())
        d = len(neigh)
        if d < 2:
            continue
        links = 0
        neigh_list = list(neigh)
        for i, u in enumerate(neigh_list):
            au = adj[u]
            links += sum(1 for v in neigh_list[i + 1 :] if v in au)
        total += 2.0 * links / (d * (d - 1))
    return total / entities.size


def shard_stats(shards: list[KnowledgeGraph]) -> ShardStats:
    """Per-shard size and topology statistics plus the entity-overlap count."""
    rows = []
    membership: dict[int, int] = {}
    for i, shard in enumerate(shards):
        ents = shard.entity_ids()
        degs = degree_counts(shard)
        avg_deg = float(np.mean(list(degs.values()))) if degs else 0.0
        rows.append(
            ShardStatsRow(
                shard_id=i,
                n_relations=int(shard.relation_ids().size),
                n_entities=int(ents.size),
                n_triples=len(shard),
                avg_degree=avg_deg,
                avg_clustering=average_clustering(shard),
            )
        )
        for e in ents.tolist():
            membership[e] = membership.get(e, 0) + 1
    overlap = sum(1 for c in membership.values() if c >= 2)
    return ShardStats(shards=rows, overlap_entities=overlap)
