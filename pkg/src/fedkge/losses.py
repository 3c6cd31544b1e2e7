"""Training and unlearning losses over triple scores, with analytic
gradients with respect to the scores.

Every function is vectorized: ``positive`` scores may be any shape s and
``negatives`` must then be s + (n,). Scalars work too. Gradients returned
here compose with the score gradients from :mod:`fedkge.embedding` by the
chain rule. Teacher distributions are constants: no gradient flows
through the second argument of a distillation term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), stable for large |x|."""
    return np.logaddexp(0.0, x)


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    """log sigma(x) = -softplus(-x), stable for large |x|."""
    return -np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class ScoredBatch:
    """Positive scores with their negative-sample scores.

    ``positive`` has any shape s, ``negatives`` shape s + (n,) with n >= 1.
    ``provenance`` records which model produced the scores.
    """

    positive: np.ndarray
    negatives: np.ndarray
    provenance: str = "local"

    def __post_init__(self):
        pos = np.asarray(self.positive, dtype=np.float64)
        neg = np.asarray(self.negatives, dtype=np.float64)
        if neg.ndim == 0 or neg.shape[-1] < 1:
            raise ValueError("need at least one negative score")
        if neg.shape[:-1] != pos.shape:
            raise ValueError(
                f"negatives shape {neg.shape} does not extend positive shape {pos.shape}"
            )
        if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
            raise ValueError("non-finite score in batch")
        if self.provenance not in ("local", "global"):
            raise ValueError(f"provenance must be local or global, got {self.provenance!r}")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negatives", neg)

    @property
    def n_negatives(self) -> int:
        return self.negatives.shape[-1]


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for the composite objectives; all non-negative."""

    mu_distill: float = 0.0
    mu_soft: float = 0.0
    mu_prox: float = 0.0

    def __post_init__(self):
        for name in ("mu_distill", "mu_soft", "mu_prox"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


# ---------------------------------------------------------------------------
# prediction


def prediction_loss(batch: ScoredBatch) -> np.ndarray:
    """-log sigma(S+) - (1/n) sum_j log sigma(-Sj-)."""
    return softplus(-batch.positive) + softplus(batch.negatives).mean(axis=-1)


def prediction_grads(batch: ScoredBatch) -> tuple[np.ndarray, np.ndarray]:
    """(d/dS+, d/dS-) of :func:`prediction_loss`."""
    n = batch.n_negatives
    return -sigmoid(-batch.positive), sigmoid(batch.negatives) / n


# ---------------------------------------------------------------------------
# distillation


def score_distribution(batch: ScoredBatch) -> np.ndarray:
    """Softmax over the positive score followed by the negatives.

    Output shape is batch shape + (n+1,), positive in slot 0. Max
    subtraction keeps the exponentials in range.
    """
    scores = np.concatenate(
        [batch.positive[..., None], batch.negatives], axis=-1
    )
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def distill_loss(student: np.ndarray, teacher: np.ndarray) -> np.ndarray:
    """KL(student || teacher) between probability rows of equal length."""
    student = np.asarray(student, dtype=np.float64)
    teacher = np.asarray(teacher, dtype=np.float64)
    if student.shape[-1] != teacher.shape[-1]:
        raise ValueError(
            f"distribution lengths differ: {student.shape[-1]} vs {teacher.shape[-1]}"
        )
    return (student * (np.log(student) - np.log(teacher))).sum(axis=-1)


def distill_grads(
    batch: ScoredBatch, teacher: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of KL(softmax(scores) || teacher) w.r.t. the raw scores.

    With p the student distribution: dKL/ds_k = p_k (ln(p_k/q_k) - KL).
    """
    p = score_distribution(batch)
    logratio = np.log(p) - np.log(np.asarray(teacher, dtype=np.float64))
    kl = (p * logratio).sum(axis=-1, keepdims=True)
    g = p * (logratio - kl)
    return g[..., 0], g[..., 1:]


# ---------------------------------------------------------------------------
# composite training objective


def joint_local_loss(
    batch: ScoredBatch, distill: np.ndarray, weights: LossWeights
) -> np.ndarray:
    """prediction_loss + mu_distill * distill.

    ``distill`` is the already-computed KL value for this batch; the
    mirrored update for the other side swaps which scores play student.
    """
    return prediction_loss(batch) + weights.mu_distill * np.asarray(distill)


def joint_local_grads(
    batch: ScoredBatch, teacher: np.ndarray | None, weights: LossWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Score gradients of the joint objective; teacher may be None when
    mu_distill is zero."""
    dpos, dneg = prediction_grads(batch)
    if weights.mu_distill and teacher is not None:
        kpos, kneg = distill_grads(batch, teacher)
        dpos = dpos + weights.mu_distill * kpos
        dneg = dneg + weights.mu_distill * kneg
    return dpos, dneg


# ---------------------------------------------------------------------------
# confusion (unlearning)


def hard_confusion_loss(batch: ScoredBatch) -> np.ndarray:
    """Prediction loss with the positive treated as one more negative."""
    return softplus(batch.positive) + softplus(batch.negatives).mean(axis=-1)


def hard_confusion_grads(batch: ScoredBatch) -> tuple[np.ndarray, np.ndarray]:
    n = batch.n_negatives
    return sigmoid(batch.positive), sigmoid(batch.negatives) / n


def soft_confusion_loss(batch: ScoredBatch) -> np.ndarray:
    """(1/n) sum_j |Sj- - S+|: drags the positive toward its negatives."""
    return np.abs(batch.negatives - batch.positive[..., None]).mean(axis=-1)


def soft_confusion_grads(batch: ScoredBatch) -> tuple[np.ndarray, np.ndarray]:
    n = batch.n_negatives
    sign = np.sign(batch.negatives - batch.positive[..., None])
    return -sign.sum(axis=-1) / n, sign / n


def interference_loss(
    batch: ScoredBatch, distill: np.ndarray, weights: LossWeights
) -> np.ndarray:
    """hard + mu_soft * soft + mu_distill * distill."""
    return (
        hard_confusion_loss(batch)
        + weights.mu_soft * soft_confusion_loss(batch)
        + weights.mu_distill * np.asarray(distill)
    )


def interference_grads(
    batch: ScoredBatch, teacher: np.ndarray | None, weights: LossWeights
) -> tuple[np.ndarray, np.ndarray]:
    dpos, dneg = hard_confusion_grads(batch)
    if weights.mu_soft:
        spos, sneg = soft_confusion_grads(batch)
        dpos = dpos + weights.mu_soft * spos
        dneg = dneg + weights.mu_soft * sneg
    if weights.mu_distill and teacher is not None:
        kpos, kneg = distill_grads(batch, teacher)
        dpos = dpos + weights.mu_distill * kpos
        dneg = dneg + weights.mu_distill * kneg
    return dpos, dneg


# ---------------------------------------------------------------------------
# proximal regularizer


def proximal_term(local_rows: np.ndarray, anchor_rows: np.ndarray, mu_prox: float) -> float:
    """(mu/2) ||local - anchor||^2 over the rows touched in a batch."""
    local_rows = np.asarray(local_rows, dtype=np.float64)
    anchor_rows = np.asarray(anchor_rows, dtype=np.float64)
    if local_rows.shape != anchor_rows.shape:
        raise ValueError(
            f"shape mismatch: {local_rows.shape} vs {anchor_rows.shape}"
        )
    diff = local_rows - anchor_rows
    return 0.5 * mu_prox * float((diff * diff).sum())


def proximal_grad(local_rows: np.ndarray, anchor_rows: np.ndarray, mu_prox: float) -> np.ndarray:
    """mu * (local - anchor), the gradient of :func:`proximal_term`."""
    local_rows = np.asarray(local_rows, dtype=np.float64)
    anchor_rows = np.asarray(anchor_rows, dtype=np.float64)
    if local_rows.shape != anchor_rows.shape:
        raise ValueError(
            f"shape mismatch: {local_rows.shape} vs {anchor_rows.shape}"
        )
    return mu_prox * (local_rows - anchor_rows)
