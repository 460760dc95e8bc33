"""Norm-based anomaly scores, augmentation norm statistics and AUROC.

Higher scores mean "more normal".  The three score kinds share one set of
augmented features per sample, so for identical draws
``s_mu <= s_l2_ens`` and ``mu^2 + sigma^2 + sigma_v^2 == s_l2_ens`` hold
by construction (population normalisation throughout).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import LabeledSample, TransformSpec, augment_batch, stack
from .encoder import EncoderParams, embed_array
from .errors import ContractError

S_L2 = "s_l2"
S_MU = "s_mu"
S_L2_ENS = "s_l2_ens"
SCORE_KINDS = (S_L2, S_MU, S_L2_ENS)

DEFAULT_N_AUG = 32


@dataclass(frozen=True)
class NormStats:
    mu: float
    sigma: float
    sigma_v: float
    n_aug: int


def sample_seed(seed: int, index: int) -> int:
    """Seed of the augmentation draw for the ``index``-th sample of a set."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def augmented_views(x: np.ndarray, transforms: Sequence[TransformSpec], n_aug: int, seed: int) -> np.ndarray:
    """``(n_aug, d)`` augmented copies of one vector."""
    if n_aug < 1:
        raise ContractError(f"n_aug must be at least 1, got {n_aug}")
    x = np.asarray(x, dtype=np.float64)
    return augment_batch(np.repeat(x[None, :], n_aug, axis=0), transforms, np.random.default_rng(seed))


def augmented_view_table(xs: np.ndarray, transforms, n_aug: int, seed: int) -> np.ndarray:
    """``(n, n_aug, d)``; sample ``i`` is drawn with ``sample_seed(seed, i)``."""
    xs = np.asarray(xs, dtype=np.float64)
    if len(xs) == 0:
        return np.zeros((0, n_aug, xs.shape[-1] if xs.ndim == 2 else 0))
    return np.stack([augmented_views(x, transforms, n_aug, sample_seed(seed, i)) for i, x in enumerate(xs)])


def features_of_views(params: EncoderParams, views: np.ndarray) -> np.ndarray:
    n, k, d = views.shape
    return embed_array(params, views.reshape(n * k, d)).reshape(n, k, -1)


def scores_from_features(feats: np.ndarray, kind: str) -> np.ndarray:
    """Scores from ``(n, n_aug, m)`` augmented features (``s_mu``, ``s_l2_ens``)."""
    if kind == S_MU:
        m = feats.mean(axis=1)
        return np.einsum("ij,ij->i", m, m)
    if kind == S_L2_ENS:
        return np.einsum("ikj,ikj->ik", feats, feats).mean(axis=1)
    raise ContractError(f"{kind!r} is not an ensemble score")


def score(params: EncoderParams, x, kind: str, n_aug: int = DEFAULT_N_AUG, seed: int = 0,
          transforms: Sequence[TransformSpec] = ()) -> float:
    """Score one vector.  ``s_l2`` ignores ``n_aug`` and the augmentations."""
    if kind not in SCORE_KINDS:
        raise ContractError(f"unknown score kind {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    if kind == S_L2:
        f = embed_array(params, x[None, :])[0]
        return float(f @ f)
    views = augmented_views(x, transforms, n_aug, seed)
    return float(scores_from_features(features_of_views(params, views[None]), kind)[0])


def stats_from_features(feats: np.ndarray) -> NormStats:
    """Norm statistics of one sample's ``(n_aug, m)`` augmented features."""
    k = feats.shape[0]
    if k < 2:
        raise ContractError(f"norm statistics need n_aug >= 2, got {k}")
    mean = feats.mean(axis=0)
    mu = float(np.sqrt(mean @ mean))
    dev = feats - mean
    total = float(np.einsum("ij,ij->", dev, dev) / k)
    if mu == 0.0:
        return NormStats(0.0, 0.0, float(np.sqrt(total)), k)
    u = mean / mu
    sigma_sq = float(np.mean((dev @ u) ** 2))
    sigma_v_sq = max(total - sigma_sq, 0.0)
    return NormStats(mu, float(np.sqrt(sigma_sq)), float(np.sqrt(sigma_v_sq)), k)


def batch_stats(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(mu, sigma, sigma_v)`` over ``(n, n_aug, m)`` features."""
    mean = feats.mean(axis=1)
    mu = np.sqrt(np.einsum("ij,ij->i", mean, mean))
    dev = feats - mean[:, None, :]
    total = np.einsum("ikj,ikj->i", dev, dev) / feats.shape[1]
    u = np.where(mu[:, None] > 0, mean / np.where(mu > 0, mu, 1.0)[:, None], 0.0)
    sigma_sq = np.mean(np.einsum("ikj,ij->ik", dev, u) ** 2, axis=1)
    sigma_v_sq = np.maximum(total - sigma_sq, 0.0)
    return mu, np.sqrt(sigma_sq), np.sqrt(sigma_v_sq)


def norm_stats(params: EncoderParams, x, n_aug: int = DEFAULT_N_AUG, seed: int = 0,
               transforms: Sequence[TransformSpec] = ()) -> NormStats:
    if n_aug < 2:
        raise ContractError(f"norm statistics need n_aug >= 2, got {n_aug}")
    views = augmented_views(x, transforms, n_aug, seed)
    return stats_from_features(features_of_views(params, views[None])[0])


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    v = values[order]
    ranks = np.empty(len(v))
    starts = np.flatnonzero(np.r_[True, v[1:] != v[:-1]])
    ends = np.r_[starts[1:], len(v)]
    for s, e in zip(starts, ends):
        ranks[s:e] = (s + e + 1) / 2.0  # 1-based average rank
    out = np.empty(len(v))
    out[order] = ranks
    return out


def auroc(scores_normal, scores_anomalous) -> float:
    """``P(normal > anomalous) + 0.5 P(tie)`` via the rank-sum (Mann-Whitney) statistic."""
    a = np.asarray(scores_normal, dtype=np.float64).reshape(-1)
    b = np.asarray(scores_anomalous, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ContractError("AUROC needs non-empty normal and anomalous score sets")
    ranks = _midranks(np.concatenate([a, b]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u / (a.size * b.size))


@dataclass
class Evaluation:
    auroc: float
    kind: str
    table: list[tuple[int, str, float]]

    def write_csv(self, path) -> None:
        write_score_table(path, self.table)


def score_samples(params: EncoderParams, samples: Sequence[LabeledSample] | np.ndarray, kind: str,
                  n_aug: int, seed: int, transforms: Sequence[TransformSpec] = ()) -> np.ndarray:
    xs = stack(samples) if not isinstance(samples, np.ndarray) else samples
    if kind == S_L2:
        f = embed_array(params, xs)
        return np.einsum("ij,ij->i", f, f)
    if kind not in SCORE_KINDS:
        raise ContractError(f"unknown score kind {kind!r}")
    feats = features_of_views(params, augmented_view_table(xs, transforms, n_aug, seed))
    return scores_from_features(feats, kind)


def evaluate(params: EncoderParams, normal_test: Sequence[LabeledSample], anomaly_test: Sequence[LabeledSample],
             kind: str = S_MU, n_aug: int = DEFAULT_N_AUG, seed: int = 0,
             transforms: Sequence[TransformSpec] = ()) -> Evaluation:
    """Score both sets and compute AUROC.

    Each set uses the same per-index seed policy, so scoring a set against
    itself yields exactly 0.5.
    """
    if not normal_test or not anomaly_test:
        raise ContractError("evaluation needs non-empty normal and anomaly sets")
    s_norm = score_samples(params, normal_test, kind, n_aug, seed, transforms)
    s_anom = score_samples(params, anomaly_test, kind, n_aug, seed, transforms)
    table = [(i, s.origin, float(v)) for i, (s, v) in enumerate(zip(normal_test, s_norm))]
    off = len(table)
    table += [(off + i, s.origin, float(v)) for i, (s, v) in enumerate(zip(anomaly_test, s_anom))]
    return Evaluation(auroc(s_norm, s_anom), kind, table)


def write_score_table(path, table) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "origin", "score"])
        for sid, origin, v in table:
            w.writerow([sid, origin, f"{v:.17g}"])
