"""Embedding tables, scoring models with analytic gradients, negative
sampling, and a sparse (lazy) Adam optimizer.

Three scoring models are supported. Complex-valued kinds store a row as
paired halves: the first half holds real parts, the second imaginary parts.
Rotation relations are stored as phase angles, so the unit-modulus
constraint holds by construction and the relation row is half as wide.

All scoring and gradient functions are pure and vectorized over leading
axes; the last axis is the embedding width.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from fedkge.kg import FilterIndex


class ModelKind(str, Enum):
    TRANSE = "transe"
    COMPLEX = "complex"
    ROTATE = "rotate"

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown model {name!r}; expected one of "
                f"{', '.join(k.value for k in cls)}"
            ) from None


PAIRED_KINDS = (ModelKind.COMPLEX, ModelKind.ROTATE)


def entity_width(kind: ModelKind, dim: int) -> int:
    _check_dim(kind, dim)
    return dim


def relation_width(kind: ModelKind, dim: int) -> int:
    _check_dim(kind, dim)
    # rotations keep one phase per complex coordinate
    return dim // 2 if kind is ModelKind.ROTATE else dim


def _check_dim(kind: ModelKind, dim: int) -> None:
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if kind in PAIRED_KINDS and dim % 2:
        raise ValueError(f"{kind.value} needs an even dim, got {dim}")


@dataclass
class EmbeddingTable:
    """A (count, width) block of real parameters plus its interpretation."""

    rows: np.ndarray
    kind: ModelKind
    role: str  # "entity" | "relation"

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.rows.copy(), self.kind, self.role)


def init_table(count: int, kind: ModelKind, role: str, dim: int, seed) -> EmbeddingTable:
    """Seeded uniform init on [-6/sqrt(dim), 6/sqrt(dim)].

    Rotation relation rows are phases drawn uniformly from (-pi, pi]
    instead. ``seed`` may be an int or a numpy seed sequence list.
    """
    if role not in ("entity", "relation"):
        raise ValueError(f"role must be entity or relation, got {role!r}")
    width = entity_width(kind, dim) if role == "entity" else relation_width(kind, dim)
    rng = np.random.default_rng(seed)
    if kind is ModelKind.ROTATE and role == "relation":
        rows = np.pi - rng.uniform(0.0, 2.0 * np.pi, size=(count, width))
    else:
        bound = 6.0 / np.sqrt(dim)
        rows = rng.uniform(-bound, bound, size=(count, width))
    return EmbeddingTable(rows, kind, role)


def _halves(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def score(kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Plausibility score of (h, r, t); higher is more plausible.

    Translation: -||h + r - t||. Bilinear-complex: Re<h, r, conj(t)>.
    Rotation: -||h * e^{i r} - t|| with r the stored phases.
    """
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if kind is ModelKind.TRANSE:
        return -np.linalg.norm(h + r - t, axis=-1)
    if kind is ModelKind.COMPLEX:
        hre, him = _halves(h)
        rre, rim = _halves(r)
        tre, tim = _halves(t)
        return ((hre * rre - him * rim) * tre + (hre * rim + him * rre) * tim).sum(axis=-1)
    hre, him = _halves(h)
    cos, sin = np.cos(r), np.sin(r)
    dre = hre * cos - him * sin - _halves(t)[0]
    dim_ = hre * sin + him * cos - _halves(t)[1]
    return -np.sqrt((dre * dre + dim_ * dim_).sum(axis=-1))


def score_gradients(
    kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic (d_score/d_h, d_score/d_r, d_score/d_t).

    Inputs must already share a common shape. At a zero norm the
    translation and rotation kinds return the zero subgradient. The
    rotation relation gradient is taken with respect to the phases.
    """
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if kind is ModelKind.TRANSE:
        d = h + r - t
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        unit = np.divide(d, nrm, out=np.zeros_like(d), where=nrm > 0)
        return -unit, -unit.copy(), unit
    if kind is ModelKind.COMPLEX:
        hre, him = _halves(h)
        rre, rim = _halves(r)
        tre, tim = _halves(t)
        gh = np.concatenate(
            [rre * tre + rim * tim, -rim * tre + rre * tim], axis=-1
        )
        gr = np.concatenate(
            [hre * tre + him * tim, -him * tre + hre * tim], axis=-1
        )
        gt = np.concatenate(
            [hre * rre - him * rim, hre * rim + him * rre], axis=-1
        )
        return gh, gr, gt
    hre, him = _halves(h)
    tre, tim = _halves(t)
    cos, sin = np.cos(r), np.sin(r)
    rot_re = hre * cos - him * sin
    rot_im = hre * sin + him * cos
    dre = rot_re - tre
    dim_ = rot_im - tim
    nrm = np.sqrt((dre * dre + dim_ * dim_).sum(axis=-1, keepdims=True))
    safe = nrm > 0
    ure = np.divide(dre, nrm, out=np.zeros_like(dre), where=safe)
    uim = np.divide(dim_, nrm, out=np.zeros_like(dim_), where=safe)
    gh = np.concatenate(
        [-(ure * cos + uim * sin), ure * sin - uim * cos], axis=-1
    )
    gr = ure * rot_im - uim * rot_re
    gt = np.concatenate([ure, uim], axis=-1)
    return gh, gr, gt


def score_with_gradients(
    kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(score, d_score/d_h, d_score/d_r, d_score/d_t) in one pass.

    Shares the norm / rotation intermediates between the score and its
    gradients; on large negative blocks this halves the array traffic of
    calling :func:`score` and :func:`score_gradients` separately. Outputs
    may alias one another (the translation head and relation gradients are
    the same array), so callers must treat them as read-only.
    """
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if kind is ModelKind.TRANSE:
        d = h + r - t
        nrm = np.sqrt(np.einsum("...i,...i->...", d, d))
        unit = np.divide(
            d, nrm[..., None], out=np.zeros_like(d), where=nrm[..., None] > 0
        )
        neg_unit = -unit
        return -nrm, neg_unit, neg_unit, unit
    if kind is ModelKind.COMPLEX:
        hre, him = _halves(h)
        rre, rim = _halves(r)
        tre, tim = _halves(t)
        prod_re = hre * rre - him * rim
        prod_im = hre * rim + him * rre
        s = np.einsum("...i,...i->...", prod_re, tre) + np.einsum(
            "...i,...i->...", prod_im, tim
        )
        gh = np.concatenate(
            [rre * tre + rim * tim, -rim * tre + rre * tim], axis=-1
        )
        gr = np.concatenate(
            [hre * tre + him * tim, -him * tre + hre * tim], axis=-1
        )
        gt = np.concatenate([prod_re, prod_im], axis=-1)
        return s, gh, gr, gt
    hre, him = _halves(h)
    tre, tim = _halves(t)
    cos, sin = np.cos(r), np.sin(r)
    rot_re = hre * cos - him * sin
    rot_im = hre * sin + him * cos
    dre = rot_re - tre
    dim_ = rot_im - tim
    nrm = np.sqrt(
        np.einsum("...i,...i->...", dre, dre)
        + np.einsum("...i,...i->...", dim_, dim_)
    )
    wide = nrm[..., None]
    ure = np.divide(dre, wide, out=np.zeros_like(dre), where=wide > 0)
    uim = np.divide(dim_, wide, out=np.zeros_like(dim_), where=wide > 0)
    gh = np.concatenate(
        [-(ure * cos + uim * sin), ure * sin - uim * cos], axis=-1
    )
    gr = ure * rot_im - uim * rot_re
    gt = np.concatenate([ure, uim], axis=-1)
    return -nrm, gh, gr, gt


def margin_offset(kind: ModelKind, gamma: float) -> float:
    """Additive shift applied to scores inside losses.

    Distance-based kinds get +gamma so a perfect triple scores gamma
    rather than 0 under the sigmoid; the bilinear kind is left raw.
    gamma = 0 disables the shift entirely.
    """
    return float(gamma) if kind in (ModelKind.TRANSE, ModelKind.ROTATE) else 0.0


def wrap_phases(theta: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi] without changing the rotation they encode."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


# ---------------------------------------------------------------------------
# negative sampling


def _pad_known(sets: list) -> np.ndarray:
    """Known-id sets as a (len(sets), max_width) matrix padded with -1."""
    width = max((len(s) for s in sets), default=0)
    out = np.full((len(sets), max(width, 1)), -1, dtype=np.int64)
    for i, s in enumerate(sets):
        if s:
            out[i, : len(s)] = np.fromiter(s, dtype=np.int64, count=len(s))
    return out


def _fill_corrupted(
    column: np.ndarray,
    mask: np.ndarray,
    known: np.ndarray,
    pool: np.ndarray,
    rng: np.random.Generator,
    limit: int,
) -> None:
    """Fill masked slots of (B, n) ``column`` with non-member pool draws.

    Draws for all open slots come in one batch per pass (row-major order),
    and only slots that hit a known id are redrawn, so the result stays a
    pure function of the generator state.
    """
    rejections = np.zeros(len(column), dtype=np.int64)
    active = mask.copy()
    while True:
        rows, cols = np.nonzero(active)
        if rows.size == 0:
            return
        draws = pool[rng.integers(0, len(pool), size=rows.size)]
        bad = (draws[:, None] == known[rows]).any(axis=1)
        good = ~bad
        column[rows[good], cols[good]] = draws[good]
        active[rows[good], cols[good]] = False
        if bad.any():
            rejections += np.bincount(rows[bad], minlength=len(rejections))
            worst = int(rejections.max())
            if worst >= limit:
                raise ValueError(
                    f"rejected {worst} corruption draws (limit {limit}); "
                    "entity pool cannot produce non-member negatives"
                )


def sample_negative_batch(
    triples: np.ndarray,
    n: int,
    index: FilterIndex,
    pool: np.ndarray,
    rng: np.random.Generator,
    corrupt_heads: bool = False,
) -> np.ndarray:
    """Draw n corrupted triples per positive, rejecting known-true ones.

    Returns (len(triples), n, 3) int64. Tails are corrupted by default;
    with ``corrupt_heads`` each slot flips a fair coin between head and
    tail corruption (all coins drawn first, then every tail slot of the
    batch, then every head slot, so results stay a pure function of the
    generator state). Duplicates among the n draws are allowed. Any
    positive accumulating 1000*n rejected draws raises ValueError.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise ValueError("empty entity pool")
    out = np.repeat(triples[:, None, :], n, axis=1)
    limit = 1000 * n
    known_tails = _pad_known(
        [index.tails(h, r) for h, r, _ in triples.tolist()]
    )
    if corrupt_heads:
        head_side = rng.random((len(triples), n)) < 0.5
        _fill_corrupted(out[:, :, 2], ~head_side, known_tails, pool, rng, limit)
        known_heads = _pad_known(
            [index.heads(r, t) for _, r, t in triples.tolist()]
        )
        _fill_corrupted(out[:, :, 0], head_side, known_heads, pool, rng, limit)
    else:
        mask = np.ones((len(triples), n), dtype=bool)
        _fill_corrupted(out[:, :, 2], mask, known_tails, pool, rng, limit)
    return out


def sample_negatives(
    triple,
    n: int,
    index: FilterIndex,
    pool: np.ndarray,
    seed,
    corrupt_heads: bool = False,
) -> np.ndarray:
    """Single-positive convenience wrapper; returns (n, 3) int64."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batch = sample_negative_batch(
        np.asarray(triple, dtype=np.int64).reshape(1, 3),
        n,
        index,
        pool,
        rng,
        corrupt_heads=corrupt_heads,
    )
    return batch[0]


# ---------------------------------------------------------------------------
# sparse Adam


@dataclass
class AdamState:
    """Per-row Adam moments with lazy (touched-rows-only) semantics.

    Moments of rows absent from a step are neither decayed nor
    bias-corrected; each row keeps its own step counter. This trades
    exactness of dense Adam for determinism under sparse updates.
    """

    m: np.ndarray
    v: np.ndarray
    steps: np.ndarray
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_table(cls, table: EmbeddingTable, lr: float = 1e-4) -> "AdamState":
        return cls(
            m=np.zeros_like(table.rows),
            v=np.zeros_like(table.rows),
            steps=np.zeros(table.count, dtype=np.int64),
            lr=lr,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            self.m.copy(), self.v.copy(), self.steps.copy(),
            self.lr, self.beta1, self.beta2, self.eps,
        )


def adam_step(
    table: EmbeddingTable, rows: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[EmbeddingTable, AdamState]:
    """Apply one Adam update to the given (unique) rows, in place.

    ``grads`` is the gradient of the objective being minimized. Rows not
    listed are untouched. A non-finite gradient raises ValueError naming
    the offending table row.
    """
    rows = np.asarray(rows, dtype=np.int64)
    grads = np.asarray(grads, dtype=np.float64)
    bad = ~np.isfinite(grads).all(axis=-1)
    if bad.any():
        raise ValueError(f"non-finite gradient for row {int(rows[bad][0])}")

    state.steps[rows] += 1
    t = state.steps[rows][:, None].astype(np.float64)
    m = state.m[rows] = state.beta1 * state.m[rows] + (1 - state.beta1) * grads
    v = state.v[rows] = state.beta2 * state.v[rows] + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    table.rows[rows] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return table, state


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"FKGE"
_OPT_MAGIC = b"FKGO"
_VERSION = 1
_KIND_CODE = {ModelKind.TRANSE: 0, ModelKind.COMPLEX: 1, ModelKind.ROTATE: 2}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODE.items()}
_ROLE_CODE = {"entity": 0, "relation": 1}
_ROLE_FROM_CODE = {v: k for k, v in _ROLE_CODE.items()}

_TABLE_HEADER = struct.Struct("<4sIIIQQ")
_OPT_HEADER = struct.Struct("<4sIQQdddd")


def save_table(
    path: str | Path, table: EmbeddingTable, manifest: dict[str, str] | None = None
) -> None:
    """Write a table as a versioned little-endian float64 blob.

    ``manifest`` entries (seed, config hash, anything textual) go to a
    sidecar ``<path>.manifest`` file as ``key=value`` lines.
    """
    header = _TABLE_HEADER.pack(
        _MAGIC,
        _VERSION,
        _KIND_CODE[table.kind],
        _ROLE_CODE[table.role],
        table.count,
        table.width,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(table.rows, dtype="<f8").tobytes())
    if manifest is not None:
        with open(str(path) + ".manifest", "w", encoding="utf-8") as fh:
            for key, value in manifest.items():
                fh.write(f"{key}={value}\n")


def load_table(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        head = fh.read(_TABLE_HEADER.size)
        if len(head) < _TABLE_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, kind_code, role_code, count, width = _TABLE_HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not an embedding checkpoint (bad magic)")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != count * width:
        raise ValueError(f"{path}: expected {count * width} values, got {data.size}")
    rows = data.reshape(count, width).astype(np.float64)
    return EmbeddingTable(rows, _KIND_FROM_CODE[kind_code], _ROLE_FROM_CODE[role_code])


def load_manifest(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(str(path) + ".manifest", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


def save_adam(path: str | Path, state: AdamState) -> None:
    """Persist optimizer moments so training can resume bit-identically."""
    count, width = state.m.shape
    header = _OPT_HEADER.pack(
        _OPT_MAGIC, _VERSION, count, width,
        state.lr, state.beta1, state.beta2, state.eps,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.m, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.v, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.steps, dtype="<i8").tobytes())


def load_adam(path: str | Path) -> AdamState:
    with open(path, "rb") as fh:
        head = fh.read(_OPT_HEADER.size)
        if len(head) < _OPT_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, count, width, lr, b1, b2, eps = _OPT_HEADER.unpack(head)
        if magic != _OPT_MAGIC:
            raise ValueError(f"{path}: not an optimizer checkpoint (bad magic)")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        n = count * width
        m = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(count, width)
        v = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(count, width)
        steps = np.frombuffer(fh.read(8 * count), dtype="<i8")
    return AdamState(
        m.astype(np.float64), v.astype(np.float64), steps.astype(np.int64),
        lr=lr, beta1=b1, beta2=b2, eps=eps,
    )
