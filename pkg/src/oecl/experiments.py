"""Experiment drivers: alpha sweep, diminishing effect and few-shot outlier exposure.

Every driver trains independent jobs that may run in a thread pool.  Rows
are keyed and returned in input order, so results never depend on the
number of workers.  AUROC is always measured on the held-out test splits.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

from .config import ExperimentConfig
from .data import make_oe_pool, subsample
from .errors import ContractError
from .losses import WANG_ISOLA
from .scoring import S_L2, S_MU, evaluate
from .train import MetricsLog, TrainResult, _int_seed, train

# stream tags continuing the ones in train.py
_TEST, _FRACTION = 6, 7


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def heldout_auroc(result: TrainResult, kind: str = S_MU) -> float:
    """AUROC of a trained model on the test splits of its benchmark."""
    cfg = result.config
    ev = evaluate(result.params, cfg.data.normal_split("test"), cfg.data.anomaly_split("test"), kind=kind,
                  n_aug=cfg.n_aug_score, seed=_int_seed(cfg.seed, _TEST), transforms=cfg.data.augment)
    return ev.auroc


@dataclass
class SweepRow:
    weight: float
    exp_uniform: float
    auroc: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    metrics: dict[float, MetricsLog]


def run_alpha_sweep(base: ExperimentConfig, weights: Sequence[float], workers: int = 1) -> SweepResult:
    """Train on ``(1 - w) L_align + w L_uniform`` for every weight ``w``.

    Losses take the Wang-Isola form and outlier exposure is switched off,
    so only the balance of the two contrastive terms varies.  ``exp_uniform``
    is the exponentiated uniformity of the final logged epoch; it tends to 1
    when every input collapses onto one point.
    """
    if not weights:
        raise ContractError("the sweep needs at least one weight")
    for w in weights:
        if not 0.0 <= w <= 1.0:
            raise ContractError(f"sweep weights must lie in [0, 1], got {w}")

    def job(w):
        cfg = base.replace(oe_kind="none", loss__form=WANG_ISOLA, loss__uniform_weight=float(w))
        r = train(cfg)
        return SweepRow(float(w), math.exp(r.metrics.final.loss_uniform), heldout_auroc(r, S_MU)), r.metrics

    out = _map(job, list(weights), workers)
    return SweepResult([row for row, _ in out], {row.weight: m for row, m in out})


@dataclass
class DiminishRow:
    fraction: float
    oe_kind: str
    auroc: float
    baseline_auroc: float
    gain: float


def run_diminishing(base: ExperimentConfig, fractions: Sequence[float], oe_kinds: Sequence[str] = ("near", "far"),
                    workers: int = 1) -> list[DiminishRow]:
    """OE gain in ``s_l2`` AUROC as the normal training set grows.

    For each fraction the same deterministic subsample is used by the no-OE
    baseline and by every outlier kind; the table holds one row per
    ``(fraction, kind)``.
    """
    if not fractions:
        raise ContractError("need at least one training fraction")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ContractError(f"fractions must lie in (0, 1], got {f}")
    for k in oe_kinds:
        if k not in ("near", "far"):
            raise ContractError(f"diminishing-effect OE kinds are near and far, got {k!r}")
    full = base.data.normal_split("train")
    subsets = {f: subsample(full, f, _int_seed(base.seed, _FRACTION)) for f in fractions}
    jobs = [(f, kind) for f in fractions for kind in ("none", *oe_kinds)]

    def job(key):
        f, kind = key
        return heldout_auroc(train(base.replace(oe_kind=kind, oe_subset_k=None), train_set=subsets[f]), S_L2)

    scores = dict(zip(jobs, _map(job, jobs, workers)))
    rows = []
    for f in fractions:
        ref = scores[(f, "none")]
        rows += [DiminishRow(float(f), k, scores[(f, k)], ref, scores[(f, k)] - ref) for k in oe_kinds]
    return rows


@dataclass
class FewShotRow:
    k: int
    auroc: float


def run_fewshot(base: ExperimentConfig, k_values: Sequence[int], workers: int = 1) -> list[FewShotRow]:
    """Train with only ``k`` outlier samples from the ``base.oe_kind`` pool.

    ``k = 0`` trains without outlier exposure.  A ``none`` base falls back to
    the near pool.
    """
    kind = base.oe_kind if base.oe_kind != "none" else "near"
    size = len(make_oe_pool(kind, base.data.normal_split("train"), base.data))
    for k in k_values:
        if not 0 <= k <= size:
            raise ContractError(f"k = {k} outside [0, {size}] for the {kind} pool")

    def job(k):
        cfg = base.replace(oe_kind=kind if k > 0 else "none", oe_subset_k=int(k) if k > 0 else None)
        return FewShotRow(int(k), heldout_auroc(train(cfg), S_MU))

    return _map(job, list(k_values), workers)


def write_table(path, rows: Sequence) -> None:
    """CSV of dataclass rows, floats with 17 significant digits."""
    if not rows:
        raise ContractError("nothing to write")
    names = [f.name for f in fields(rows[0])]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else str(v) for v in astuple(r)])
