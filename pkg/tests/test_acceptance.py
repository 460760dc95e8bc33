"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the detail lines.
Training criteria use the default configuration (benchmark ``data.seed`` 0)
with training seeds 0, 1 and 2.
"""

import itertools
import math
import time

import numpy as np
import pytest

from oecl import cli
from oecl import data as D
from oecl import encoder as enc
from oecl import losses as L
from oecl import scoring as S
from oecl import tensor as T
from oecl import theory as TH
from oecl.config import ExperimentConfig
from oecl.experiments import heldout_auroc, run_alpha_sweep, run_diminishing
from oecl.train import train

SEEDS = (0, 1, 2)
FRACTIONS = (0.05, 0.25, 1.0)
WEIGHTS = (0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


def verdict(n: int, ok: bool, detail: str) -> None:
    print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def theorem_run():
    t0 = time.perf_counter()
    check = TH.verify_theorem1(TH.default_grid(), n_samples=1_000_000, seed=0)
    return check, time.perf_counter() - t0


@pytest.fixture(scope="module")
def baselines():
    """alpha = 0 and near-OE runs for every training seed, plus the first run's wall time."""
    out, elapsed = {}, None
    for s in SEEDS:
        base = ExperimentConfig(seed=s)
        t0 = time.perf_counter()
        a0 = train(base.replace(loss__alpha=0.0))
        elapsed = elapsed or time.perf_counter() - t0
        out[s] = (a0, train(base))
    return out, elapsed


def test_c01_theorem_bound_containment(theorem_run):
    check, elapsed = theorem_run
    bad = [r for r in check.reports if r.verdict != TH.BOUNDS_HOLD]
    ok = not bad and len(check.reports) == 30 and elapsed < 60.0
    verdict(1, ok, f"{len(check.reports) - len(bad)}/{len(check.reports)} bounds hold in {elapsed:.1f} s")


def test_c02_theorem_monotone_in_mu(theorem_run):
    check, _ = theorem_run
    n = len(check.monotonicity_violations)
    verdict(2, n == 0, f"{n} monotonicity violations along mu")


def test_c03_quadrature_oracle():
    grid = [(0.0, 1.0, 1.0), (0.5, 1.0, 0.0), (1.0, 1.0, 1.0), (2.0, 1.0, 4.0), (4.0, 2.0, 1.0)]
    worst_z = 0.0
    for i, (mu, sigma, sv) in enumerate(grid):
        spec = TH.GaussianSpec(mu, sigma, sv, 2)
        est, se = TH.mc_expected_cosine(spec, 1_000_000, seed=100 + i)
        worst_z = max(worst_z, abs(est - TH.quadrature_expected_cosine(spec)) / se)
    worst_closed = max(
        abs(TH.quadrature_expected_cosine(TH.GaussianSpec(mu, sigma, 0.0, 2)) - (2 * TH.phi(mu / sigma) - 1) ** 2)
        for mu, sigma in [(0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 2.0)])
    verdict(3, worst_z <= 3.0 and worst_closed < 1e-6,
            f"max |mc - quad| = {worst_z:.2f} stderr, max closed-form gap {worst_closed:.1e}")


def test_c04_lemma():
    y_grid = [0.0, 0.25, 1.0, 4.0, 16.0, 64.0]
    failures, worst = [], 0.0
    for mu, sigma in itertools.product((0.5, 1.0, 2.0), repeat=2):
        rep = TH.verify_lemma1(mu, sigma, y_grid)
        if not rep.passed:
            failures.append((mu, sigma))
        closed = sigma * math.sqrt(2 * math.pi) * (2 * TH.phi(mu / sigma) - 1)
        worst = max(worst, abs(rep.values[0] - closed))
    verdict(4, not failures and worst < 1e-6, f"failures {failures}, max |f(0) - closed form| {worst:.1e}")


def _unit(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_c05_loss_decomposition():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(2, 65)), int(rng.integers(2, 33))
        tau = float(rng.choice([0.1, 0.5, 1.0]))
        z_a, z_b = _unit(rng, n, d), _unit(rng, n, d)
        total = L.contrastive_loss(z_a, z_b, tau).item()
        parts = L.alignment_loss(z_a, z_b, tau).item() + L.uniformity_loss(z_a, z_b, tau).item()
        worst = max(worst, abs(total - parts))
    verdict(5, worst < 1e-10, f"max |contrastive - (align + uniform)| = {worst:.1e} over 1000 batches")


def test_c06_gradients():
    rng = np.random.default_rng(6)
    worst = {}

    def check(name, fn, arrays):
        worst[name] = max(worst.get(name, 0.0), T.grad_check(fn, arrays))

    for _ in range(100):
        n, d = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        tau = float(rng.choice([0.1, 0.5, 1.0]))
        alpha = float(rng.uniform(0.1, 2.0))
        a, b, f = (rng.standard_normal((n, d)) for _ in range(3))
        cfg = L.LossConfig(tau=tau, alpha=alpha)
        check("contrastive_loss", lambda x, y: L.contrastive_loss(T.row_normalize(x), T.row_normalize(y), tau), [a, b])
        check("oecl_loss", lambda x, y, g: L.oecl_loss(T.row_normalize(x), T.row_normalize(y), g, cfg), [a, b, f])
        check("wang_isola_align", lambda x, y: L.wang_isola_align(T.row_normalize(x), T.row_normalize(y)), [a, b])
        check("wang_isola_uniform", lambda x: L.wang_isola_uniform(T.row_normalize(x)), [a])
        check("oe_norm_penalty", L.oe_norm_penalty, [f])
    ok = all(v < 1e-4 for v in worst.values())
    verdict(6, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_c07_score_identities():
    rng = np.random.default_rng(7)
    ts = D.parse_transforms("gaussian-noise(0.3); random-scale(0.8,1.2); coordinate-mask(0.2)")
    order_bad, worst = 0, 0.0
    for trial in range(1000):
        dim = int(rng.integers(2, 9))
        cfg = enc.EncoderConfig(input_dim=dim, hidden_widths=(int(rng.integers(2, 17)),),
                                feature_dim=int(rng.integers(2, 9)))
        p = enc.init_params(cfg, trial)
        x, k = rng.standard_normal(dim) * 2, int(rng.integers(2, 33))
        feats = S.features_of_views(p, S.augmented_views(x, ts, k, trial)[None])
        s_mu = S.scores_from_features(feats, S.S_MU)[0]
        s_ens = S.scores_from_features(feats, S.S_L2_ENS)[0]
        st = S.stats_from_features(feats[0])
        order_bad += s_mu > s_ens
        worst = max(worst, abs(st.mu**2 + st.sigma**2 + st.sigma_v**2 - s_ens))
    verdict(7, order_bad == 0 and worst < 1e-9,
            f"{order_bad} ordering violations, max identity gap {worst:.1e} over 1000 triples")


def test_c08_auroc():
    rng = np.random.default_rng(8)
    mismatches, invariance_bad = 0, 0
    for _ in range(1000):
        a = rng.integers(0, 8, int(rng.integers(1, 30))).astype(float)
        b = rng.integers(0, 8, int(rng.integers(1, 30))).astype(float)
        wins = sum(1.0 if x > y else 0.5 if x == y else 0.0 for x, y in itertools.product(a, b))
        mismatches += S.auroc(a, b) != wins / (len(a) * len(b))
        base = S.auroc(a, b)
        invariance_bad += S.auroc(np.exp(a / 4), np.exp(b / 4)) != base or S.auroc(3 * a - 1, 3 * b - 1) != base
    verdict(8, mismatches == 0 and invariance_bad == 0,
            f"{mismatches} oracle mismatches, {invariance_bad} invariance failures over 1000 instances")


def test_c09_norm_and_ratio_direction(baselines):
    runs, elapsed = baselines
    f = runs[0][0].metrics.final
    ok = f.mean_norm_id > f.mean_norm_ood and f.mean_mu_over_sigma_v_id > f.mean_mu_over_sigma_v_ood
    verdict(9, ok and elapsed < 300.0,
            f"norm id {f.mean_norm_id:.3f} vs ood {f.mean_norm_ood:.3f}, mu/sigma_v id "
            f"{f.mean_mu_over_sigma_v_id:.3f} vs ood {f.mean_mu_over_sigma_v_ood:.3f}, {elapsed:.1f} s")


def test_c10_oecl_improves_on_baseline(baselines):
    pairs = [(heldout_auroc(a0), heldout_auroc(oe)) for a0, oe in baselines[0].values()]
    gain = float(np.mean([oe - a0 for a0, oe in pairs]))
    detail = ", ".join(f"seed {s}: {a0:.3f} -> {oe:.3f}" for s, (a0, oe) in zip(SEEDS, pairs))
    verdict(10, gain >= 0.03, f"mean s_mu AUROC gain {gain:.3f} ({detail})")


def test_c11_diminishing_effect():
    gains = {}
    for s in SEEDS:
        for r in run_diminishing(ExperimentConfig(seed=s), FRACTIONS):
            gains.setdefault((r.oe_kind, r.fraction), []).append(r.gain)
    mean = {k: float(np.mean(v)) for k, v in gains.items()}
    far_ok = mean[("far", FRACTIONS[-1])] < mean[("far", FRACTIONS[0])]
    near_ok = all(mean[("near", f)] >= 0 for f in FRACTIONS)
    detail = "; ".join(f"{kind} " + " ".join(f"{f:g}:{mean[(kind, f)]:+.3f}" for f in FRACTIONS)
                       for kind in ("near", "far"))
    verdict(11, far_ok and near_ok, f"mean gains by fraction: {detail}")


def test_c12_alpha_sweep_collapse_and_inverted_u():
    aurocs, exp_u = [], []
    for s in SEEDS:
        rows = run_alpha_sweep(ExperimentConfig(seed=s), WEIGHTS).rows
        aurocs.append([r.auroc for r in rows])
        exp_u.append(rows[0].exp_uniform)
    mean = np.mean(aurocs, axis=0)
    collapse_ok = all(abs(u - 1.0) <= 0.05 for u in exp_u)
    interior = int(np.argmax(mean[1:-1])) + 1
    shape_ok = mean[interior] > mean[0] and mean[interior] > mean[-1]
    verdict(12, collapse_ok and shape_ok,
            f"exp(uniform) at w={WEIGHTS[0]}: {', '.join(f'{u:.3f}' for u in exp_u)}; mean AUROC "
            + " ".join(f"{w:g}:{a:.3f}" for w, a in zip(WEIGHTS, mean)))


def test_c13_cli_determinism(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("epochs = 20\nwarmup_epochs = 5\neval_every = 5\ndata.n_train = 256\n")
    grid = tmp_path / "grid.csv"
    grid.write_text("mu,sigma,sigma_v_sq,dim\n1,1,1,2\n2,1,4,8\n")
    invocations = {
        "train": (["train", "--config", str(cfg), "--seed", "4", "--out"], "metrics.csv"),
        "fewshot": (["fewshot", "--config", str(cfg), "--k", "0,1,10", "--seed", "4", "--workers", "2", "--out"], None),
        "verify-theorem": (["verify-theorem", "--grid", str(grid), "--samples", "200000", "--seed", "4", "--out"], None),
    }
    differing = []
    for name, (args, member) in invocations.items():
        blobs = []
        for i in range(2):
            out = tmp_path / f"{name}-{i}"
            assert cli.main(args + [str(out) if member else str(out) + ".csv"]) == 0
            blobs.append((out / member if member else out.with_suffix(".csv")).read_bytes())
        if blobs[0] != blobs[1]:
            differing.append(name)
    verdict(13, not differing, f"CSV outputs differ for {differing}" if differing else
            f"bitwise-identical CSV for {', '.join(invocations)}")
