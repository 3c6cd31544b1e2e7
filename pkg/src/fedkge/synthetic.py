"""Synthetic graphs with latent translational structure.

Entities get latent vectors; each relation is a latent translation whose
tails are drawn from the nearest entities to ``z_head + w_relation``, so a
translation-style embedding model can actually generalize to held-out
triples. Relations come in groups that operate on disjoint entity blocks
plus a shared bridge pool, which makes relation co-occurrence clustering
recover the groups and gives every client overlapping entities to
federate over.

With ``bridge_drift > 0`` each group sees its own drifted copy of the
bridge latents, so the groups disagree about shared-entity geometry. No
single embedding of a bridge entity then fits all groups at once, which
is the regime where plain cross-client averaging of entity rows starts
to hurt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedkge.kg import KnowledgeGraph


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated graph; defaults give a desk-scale federation."""

    n_groups: int = 3
    entities_per_group: int = 620
    n_bridge: int = 140
    n_relations: int = 20
    triples_per_relation: int = 520
    latent_dim: int = 16
    tail_pool: int = 3  # tails drawn among this many nearest entities
    noise: float = 0.05  # fraction of uniformly random tails
    bridge_drift: float = 0.0  # how far each group's bridge view drifts
    seed: int = 0

    def __post_init__(self):
        if self.n_groups < 1 or self.n_relations < self.n_groups:
            raise ValueError("need at least one relation per group")
        if not 0 <= self.noise < 1:
            raise ValueError("noise must be in [0, 1)")
        if self.tail_pool < 1:
            raise ValueError("tail_pool must be >= 1")
        if self.bridge_drift < 0:
            raise ValueError("bridge_drift must be >= 0")

    @property
    def n_entities(self) -> int:
        return self.n_groups * self.entities_per_group + self.n_bridge


def relation_groups(spec: SyntheticSpec) -> np.ndarray:
    """Group index of every relation (contiguous blocks, remainder first)."""
    return (np.arange(spec.n_relations) * spec.n_groups) // spec.n_relations


def _group_pool(spec: SyntheticSpec, g: int) -> np.ndarray:
    lo = g * spec.entities_per_group
    block = np.arange(lo, lo + spec.entities_per_group)
    bridge = np.arange(spec.n_groups * spec.entities_per_group, spec.n_entities)
    return np.concatenate([block, bridge])


def synthetic_graph(spec: SyntheticSpec) -> KnowledgeGraph:
    """Generate the graph; deterministic in ``spec.seed``, duplicates dropped."""
    rng = np.random.default_rng([spec.seed, 0xFED])
    latent = rng.normal(size=(spec.n_entities, spec.latent_dim))
    translations = rng.normal(size=(spec.n_relations, spec.latent_dim))
    groups = relation_groups(spec)

    # per-group views of the latent space; only bridge rows drift, scaled
    # back to unit variance so distances stay comparable across views
    views = [latent] * spec.n_groups
    if spec.bridge_drift > 0 and spec.n_bridge > 0:
        lo = spec.n_groups * spec.entities_per_group
        scale = np.sqrt(1.0 + spec.bridge_drift**2)
        views = []
        for _ in range(spec.n_groups):
            delta = rng.normal(size=(spec.n_bridge, spec.latent_dim))
            view = latent.copy()
            view[lo:] = (latent[lo:] + spec.bridge_drift * delta) / scale
            views.append(view)

    rows = []
    for r in range(spec.n_relations):
        z = views[groups[r]]
        pool = _group_pool(spec, groups[r])
        z_pool = z[pool]
        heads = rng.choice(pool, size=spec.triples_per_relation, replace=True)
        targets = z[heads] + translations[r]
        # nearest pool entities to each target, head excluded
        d2 = ((targets[:, None, :] - z_pool[None, :, :]) ** 2).sum(axis=2)
        d2[np.searchsorted(pool, heads)[:, None] == np.arange(len(pool))[None, :]] = np.inf
        nearest = np.argpartition(d2, spec.tail_pool, axis=1)[:, : spec.tail_pool]
        pick = rng.integers(0, spec.tail_pool, size=len(heads))
        tails = pool[nearest[np.arange(len(heads)), pick]]
        noisy = rng.random(len(heads)) < spec.noise
        if noisy.any():
            tails = tails.copy()
            tails[noisy] = rng.choice(pool, size=int(noisy.sum()), replace=True)
        rows.append(np.stack([heads, np.full(len(heads), r), tails], axis=1))

    triples = np.unique(np.concatenate(rows).astype(np.int64), axis=0)
    return KnowledgeGraph(triples, spec.n_entities, spec.n_relations)
