"""Contrastive objectives, their alignment/uniformity parts, and the outlier-exposure penalty.

Row ``i`` of ``z_a`` and ``z_b`` are two augmented views of sample ``i``.
Anchor ``z_b[i]`` has positive ``z_a[i]``; the other rows of ``z_a`` are its
negatives, so ``M = batch - 1``.  The temperature divides every similarity,
including the positive one inside the denominator, which makes

    contrastive_loss == alignment_loss + uniformity_loss

an exact algebraic identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

COSINE = "cosine-softmax"
WANG_ISOLA = "wang-isola-euclidean"
FORMS = (COSINE, WANG_ISOLA)


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.5
    alpha: float = 1.0
    # None trains the plain objective (align + uniform); a number selects the weighted mix
    uniform_weight: float | None = None
    form: str = COSINE

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if self.uniform_weight is not None and not 0.0 <= self.uniform_weight <= 1.0:
            raise ConfigError(f"uniform_weight must lie in [0, 1], got {self.uniform_weight}")
        if self.form not in FORMS:
            raise ConfigError(f"form must be one of {FORMS}, got {self.form!r}")


def _check_pairs(z_a: Tensor, z_b: Tensor) -> None:
    if z_a.ndim != 2 or z_a.shape != z_b.shape:
        raise DimensionError(f"views must be matching rank-2 batches, got {z_a.shape} and {z_b.shape}")


def _similarities(z_a: Tensor, z_b: Tensor, tau: float) -> tuple[Tensor, Tensor]:
    """``(positives, logits)``: ``logits[i, j] = <z_b[i], z_a[j]> / tau``."""
    _check_pairs(z_a, z_b)
    if z_a.shape[0] < 2:
        raise ContractError("contrastive loss needs a batch of at least 2 (no negatives otherwise)")
    logits = T.scale(T.matmul(z_b, T.transpose(z_a)), 1.0 / tau)
    eye = np.eye(z_a.shape[0])
    # diagonal read out of the same logits, so each anchor's lse >= its positive
    positives = T.sum(T.mul(logits, eye), axis=1)
    return positives, logits


def contrastive_loss(z_a, z_b, tau: float) -> Tensor:
    """Batch NT-Xent: mean over anchors of ``-log softmax`` at the positive."""
    z_a, z_b = T.as_tensor(z_a), T.as_tensor(z_b)
    pos, logits = _similarities(z_a, z_b, tau)
    return T.mean(T.sub(T.logsumexp(logits, axis=1), pos))


def alignment_loss(z_a, z_b, tau: float) -> Tensor:
    z_a, z_b = T.as_tensor(z_a), T.as_tensor(z_b)
    pos, _ = _similarities(z_a, z_b, tau)
    return T.mean(T.neg(pos))


def uniformity_loss(z_a, z_b, tau: float) -> Tensor:
    z_a, z_b = T.as_tensor(z_a), T.as_tensor(z_b)
    _, logits = _similarities(z_a, z_b, tau)
    return T.mean(T.logsumexp(logits, axis=1))


def wang_isola_align(z_a, z_b) -> Tensor:
    """Mean squared Euclidean gap between positive pairs."""
    z_a, z_b = T.as_tensor(z_a), T.as_tensor(z_b)
    _check_pairs(z_a, z_b)
    d = T.sub(z_a, z_b)
    return T.mean(T.sum(T.mul(d, d), axis=1))


def wang_isola_uniform(z_all) -> Tensor:
    """``log`` of the mean Gaussian potential ``exp(-|z_i - z_j|^2)`` over pairs ``i < j``."""
    z_all = T.as_tensor(z_all)
    if z_all.ndim != 2 or z_all.shape[0] < 2:
        raise ContractError("uniformity needs a rank-2 batch of at least 2 rows")
    i, j = np.triu_indices(z_all.shape[0], k=1)
    d = T.sub(T.take_rows(z_all, i), T.take_rows(z_all, j))
    sq = T.sum(T.mul(d, d), axis=1)
    return T.sub(T.logsumexp(T.neg(sq)), np.log(float(i.size)))


def oe_norm_penalty(f_oe) -> Tensor:
    """Mean (unsquared) l2 norm of the outlier features."""
    return T.mean(T.row_l2_norm(T.as_tensor(f_oe)))


def oecl_loss(z_a, z_b, f_oe, config: LossConfig) -> Tensor:
    return T.add(contrastive_loss(z_a, z_b, config.tau), T.scale(oe_norm_penalty(f_oe), config.alpha))


def weighted_align_uniform(z_a, z_b, z_all, a: float, form: str = WANG_ISOLA, tau: float = 0.5) -> Tensor:
    """``(1 - a) * align + a * uniform`` in the requested form.

    ``tau`` is only read by the cosine form.
    """
    if not 0.0 <= a <= 1.0:
        raise ContractError(f"uniform weight must lie in [0, 1], got {a}")
    if form == WANG_ISOLA:
        align, uniform = wang_isola_align(z_a, z_b), wang_isola_uniform(z_all)
    elif form == COSINE:
        align, uniform = alignment_loss(z_a, z_b, tau), uniformity_loss(z_a, z_b, tau)
    else:
        raise ContractError(f"unknown loss form {form!r}")
    return T.add(T.scale(align, 1.0 - a), T.scale(uniform, a))


def shift_batch(batch: np.ndarray, shifts: Sequence) -> np.ndarray:
    """Stack ``S(x)`` for every shift ``S`` (outer) and row ``x`` (inner)."""
    from .data import apply_shift_batch

    if not shifts:
        raise ContractError("the outlier-exposure shift set is empty")
    return np.concatenate([apply_shift_batch(batch, s) for s in shifts], axis=0)


def self_oecl_loss(
    z_a,
    z_b,
    batch: np.ndarray,
    shifts: Sequence,
    embed: Callable[[np.ndarray], Tensor],
    config: LossConfig,
    augment: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Tensor:
    """OECL where the outliers are distribution-shifted copies of ``batch`` itself.

    ``embed`` maps raw inputs to unnormalized features; ``augment`` (the OE
    augmentation family) is applied after shifting when given.
    """
    oe = shift_batch(batch, shifts)
    if augment is not None:
        oe = augment(oe)
    return oecl_loss(z_a, z_b, embed(oe), config)
