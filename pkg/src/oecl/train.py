"""Training loop: warm-up, cosine learning-rate decay, momentum gradient descent.

Each epoch shuffles the normal training set, draws two augmented views of
every batch, pairs it with an outlier batch, and minimises

    contrastive(view_a, view_b) + alpha * mean |f(outlier)|

with ``alpha = 0`` for the first ``warmup_epochs`` epochs.  Random streams for
shuffling, views and outlier draws are independent (all derived from
``config.seed``), so toggling the outlier source never perturbs the others.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoder as enc
from . import losses as L
from . import tensor as T
from .config import ExperimentConfig
from .data import LabeledSample, augment_batch, make_oe_pool, select_subset, stack
from .errors import ContractError, NumericalError
from .scoring import S_L2_ENS, S_MU, auroc, augmented_view_table, batch_stats, features_of_views, scores_from_features

log = logging.getLogger(__name__)

# stream tags for np.random.SeedSequence([seed, tag, ...])
_INIT, _SHUFFLE, _VIEWS, _OE, _EVAL, _SUBSET = range(6)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _int_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_total: float
    loss_contrastive: float
    loss_align: float
    loss_uniform: float
    loss_penalty: float
    mean_norm_id: float
    mean_norm_ood: float
    mean_mu_over_sigma_v_id: float
    mean_mu_over_sigma_v_ood: float
    mean_sigma_v_id: float
    mean_sigma_v_ood: float
    auroc_s_mu: float
    auroc_s_l2: float
    auroc_s_l2_ens: float


METRIC_COLUMNS = [f.name for f in fields(EpochRecord)]


@dataclass
class MetricsLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ContractError("metrics epochs must be strictly increasing")
        self.records.append(rec)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


def emit_metrics(metrics: MetricsLog, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in metrics.records:
            w.writerow([str(r.epoch)] + [f"{getattr(r, c):.17g}" for c in METRIC_COLUMNS[1:]])


def read_metrics(path) -> MetricsLog:
    out = MetricsLog()
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != METRIC_COLUMNS:
        raise ContractError(f"{path}: unexpected metrics header")
    for row in rows[1:]:
        out.append(EpochRecord(int(row[0]), *(float(v) for v in row[1:])))
    return out


def lr_schedule(epoch: int, config: ExperimentConfig) -> float:
    """Cosine decay without restart from ``lr0`` towards 0."""
    if not 0 <= epoch < config.epochs:
        raise ContractError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))


@dataclass
class TrainResult:
    params: enc.EncoderParams
    metrics: MetricsLog
    config: ExperimentConfig


@dataclass
class _Objective:
    total: T.Tensor
    contrastive: float
    align: float
    uniform: float
    penalty: float


def _objective(config: ExperimentConfig, z_a, z_b, f_oe, alpha: float) -> _Objective:
    lc = config.loss
    if lc.form == L.COSINE:
        pos, logits = L._similarities(z_a, z_b, lc.tau)
        align_t = T.mean(T.neg(pos))
        uniform_t = T.mean(T.logsumexp(logits, axis=1))
        contrastive_t = T.mean(T.sub(T.logsumexp(logits, axis=1), pos))
    else:
        align_t = L.wang_isola_align(z_a, z_b)
        uniform_t = L.wang_isola_uniform(z_a)
        contrastive_t = T.add(align_t, uniform_t)
    if lc.uniform_weight is None:
        obj = contrastive_t
    else:
        obj = T.add(T.scale(align_t, 1.0 - lc.uniform_weight), T.scale(uniform_t, lc.uniform_weight))
    if f_oe is not None:
        pen_t = L.oe_norm_penalty(f_oe)
        total = T.add(obj, T.scale(pen_t, alpha))
        pen = pen_t.item()
    else:
        total, pen = obj, 0.0
    return _Objective(total, contrastive_t.item(), align_t.item(), uniform_t.item(), pen)


class _Monitor:
    """Validation statistics with augmentation draws fixed once per run."""

    def __init__(self, config: ExperimentConfig, val_id: np.ndarray, val_ood: np.ndarray):
        seed = _int_seed(config.seed, _EVAL)
        k = config.n_aug_score
        self.id_x, self.ood_x = val_id, val_ood
        self.id_views = augmented_view_table(val_id, config.data.augment, k, seed)
        self.ood_views = augmented_view_table(val_ood, config.data.augment, k, seed)

    def measure(self, params) -> dict[str, float]:
        out = {}
        s = {}
        for tag, x, views in (("id", self.id_x, self.id_views), ("ood", self.ood_x, self.ood_views)):
            f = enc.embed_array(params, x)
            sq = np.einsum("ij,ij->i", f, f)
            feats = features_of_views(params, views)
            mu, _, sv = batch_stats(feats)
            ratio = mu / np.maximum(sv, 1e-12)
            out[f"mean_norm_{tag}"] = float(np.sqrt(sq).mean())
            out[f"mean_mu_over_sigma_v_{tag}"] = float(ratio.mean())
            out[f"mean_sigma_v_{tag}"] = float(sv.mean())
            s[tag] = {"s_l2": sq, S_MU: scores_from_features(feats, S_MU), S_L2_ENS: scores_from_features(feats, S_L2_ENS)}
        for kind in ("s_mu", "s_l2", "s_l2_ens"):
            out[f"auroc_{kind}"] = auroc(s["id"][kind], s["ood"][kind])
        return out


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    if n <= batch_size:
        return [perm]
    out = [perm[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]
    rest = perm[len(out) * batch_size:]
    if len(rest) >= 2:
        out.append(rest)
    return out


def resolve_oe_pool(config: ExperimentConfig, train_set: Sequence[LabeledSample]) -> list[LabeledSample] | None:
    """Fixed outlier corpus for ``near``/``far``; ``None`` for ``none`` and ``shift``.

    ``oe_subset_k`` keeps ``k`` samples of the pool (``k = 0`` disables OE).
    """
    if config.oe_kind in ("none", "shift"):
        return None
    pool = make_oe_pool(config.oe_kind, train_set, config.data)
    if config.oe_subset_k is not None:
        pool = select_subset(pool, config.oe_subset_k, _int_seed(config.seed, _SUBSET))
    return pool or None


def train(config: ExperimentConfig, train_set: Sequence[LabeledSample] | None = None,
          oe_pool: Sequence[LabeledSample] | None = None, val_sets=None) -> TrainResult:
    """Train an encoder; the defaults draw every split from ``config.data``.

    Raises :class:`NumericalError` naming the epoch and batch on a non-finite
    loss or parameter update.
    """
    data = config.data
    if train_set is None:
        train_set = data.normal_split("train")
    x_train = stack(train_set)
    if len(x_train) < 2:
        raise ContractError("need at least two training samples")
    if oe_pool is None:
        oe_pool = resolve_oe_pool(config, train_set)
    x_oe = stack(oe_pool) if oe_pool else None
    use_shift = config.oe_kind == "shift" and config.oe_subset_k != 0
    if val_sets is None:
        val_sets = (data.normal_split("val"), data.anomaly_split("val"))
    monitor = _Monitor(config, stack(val_sets[0]), stack(val_sets[1]))

    params = enc.init_params(config.encoder, _int_seed(config.seed, _INIT))
    velocity = [np.zeros_like(a) for a in params.arrays()]
    metrics = MetricsLog()
    T_in, T_oe = data.augment, data.oe_transforms

    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        alpha = 0.0 if epoch < config.warmup_epochs else config.loss.alpha
        sums = np.zeros(5)
        batches = _batches(len(x_train), config.batch_size, _rng(config.seed, _SHUFFLE, epoch))
        for b, idx in enumerate(batches):
            xb = x_train[idx]
            vrng = _rng(config.seed, _VIEWS, epoch, b)
            va, vb = augment_batch(xb, T_in, vrng), augment_batch(xb, T_in, vrng)
            orng = _rng(config.seed, _OE, epoch, b)
            if x_oe is not None:
                pick = orng.choice(len(x_oe), size=len(xb), replace=len(x_oe) < len(xb))
                oe = augment_batch(x_oe[pick], T_oe, orng)
            elif use_shift:
                oe = augment_batch(L.shift_batch(xb, data.shifts), T_oe, orng)
            else:
                oe = None

            p = params.with_grad()
            _, z_a = enc.represent(p, va, config.encoder)
            _, z_b = enc.represent(p, vb, config.encoder)
            f_oe = enc.embed(p, oe) if oe is not None else None
            obj = _objective(config, z_a, z_b, f_oe, alpha)
            total = obj.total.item()
            if not math.isfinite(total):
                raise NumericalError(f"non-finite loss {total} at epoch {epoch}, batch {b}")
            T.backward(obj.total)
            new = []
            for t, v in zip(p.tensors, velocity):
                v *= config.momentum
                v += t.grad
                new.append(t.data - lr * v)
            if not all(np.all(np.isfinite(a)) for a in new):
                raise NumericalError(f"non-finite parameters after update at epoch {epoch}, batch {b}")
            params = enc.EncoderParams.from_arrays(new)
            sums += (total, obj.contrastive, obj.align, obj.uniform, obj.penalty)

        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            means = sums / len(batches)
            rec = EpochRecord(epoch + 1, lr, *means, **monitor.measure(params))
            metrics.append(rec)
            log.debug("epoch %d loss %.4f auroc_s_mu %.4f", rec.epoch, rec.loss_total, rec.auroc_s_mu)
    return TrainResult(params, metrics, config)
