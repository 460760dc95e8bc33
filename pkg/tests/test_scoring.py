import itertools

import numpy as np
import pytest

from oecl import data as D
from oecl import encoder as enc
from oecl import scoring as S
from oecl.errors import ContractError


def _pairwise_auroc(a, b):
    wins = sum(1.0 if x > y else 0.5 if x == y else 0.0 for x, y in itertools.product(a, b))
    return wins / (len(a) * len(b))


def _constant_encoder(v):
    """Zero weights and bias ``v`` on the last layer: every input maps to ``v``."""
    return enc.EncoderParams.from_arrays([np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.array(v, dtype=float)])


def test_constant_features():
    p = _constant_encoder([3.0, 4.0])
    ts = D.parse_transforms("gaussian-noise(0.5)")
    x = np.array([1.0, 2.0, 3.0])
    for kind in S.SCORE_KINDS:
        assert S.score(p, x, kind, n_aug=5, seed=1, transforms=ts) == 25.0
    st = S.norm_stats(p, x, n_aug=5, seed=1, transforms=ts)
    assert (st.mu, st.sigma, st.sigma_v) == (5.0, 0.0, 0.0)


def test_two_orthogonal_views():
    feats = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    assert abs(S.scores_from_features(feats, S.S_MU)[0] - 0.5) < 1e-15
    assert S.scores_from_features(feats, S.S_L2_ENS)[0] == 1.0
    st = S.stats_from_features(feats[0])
    assert abs(st.mu - np.sqrt(0.5)) < 1e-15
    assert abs(st.sigma) < 1e-15
    assert abs(st.sigma_v - np.sqrt(0.5)) < 1e-15


def test_stats_need_two_views():
    with pytest.raises(ContractError):
        S.stats_from_features(np.ones((1, 3)))
    p = _constant_encoder([1.0, 0.0])
    with pytest.raises(ContractError):
        S.norm_stats(p, np.zeros(3), n_aug=1)


def test_score_identities_on_random_encoders():
    rng = np.random.default_rng(0)
    ts = D.parse_transforms("gaussian-noise(0.3); random-scale(0.8,1.2); coordinate-mask(0.2)")
    for trial in range(100):
        cfg = enc.EncoderConfig(input_dim=3, hidden_widths=(int(rng.integers(2, 9)),), feature_dim=int(rng.integers(2, 6)))
        p = enc.init_params(cfg, trial)
        x, k = rng.standard_normal(3) * 2, int(rng.integers(2, 12))
        feats = S.features_of_views(p, S.augmented_views(x, ts, k, trial)[None])[0]
        s_mu = S.scores_from_features(feats[None], S.S_MU)[0]
        s_ens = S.scores_from_features(feats[None], S.S_L2_ENS)[0]
        st = S.stats_from_features(feats)
        assert s_mu <= s_ens
        assert abs(st.mu**2 + st.sigma**2 + st.sigma_v**2 - s_ens) < 1e-9
        mu, sg, sv = S.batch_stats(feats[None])
        # compare squares: sqrt amplifies rounding when sigma_v is tiny
        assert np.allclose([mu[0] ** 2, sg[0] ** 2, sv[0] ** 2], [st.mu**2, st.sigma**2, st.sigma_v**2], atol=1e-12)


def test_score_matches_scalar_path():
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(5,), feature_dim=2), 3)
    ts = D.parse_transforms("gaussian-noise(0.2)")
    xs = np.random.default_rng(1).standard_normal((4, 3))
    vec = S.score_samples(p, xs, S.S_MU, n_aug=6, seed=9, transforms=ts)
    one = [S.score(p, x, S.S_MU, n_aug=6, seed=S.sample_seed(9, i), transforms=ts) for i, x in enumerate(xs)]
    np.testing.assert_allclose(vec, one, rtol=1e-14)
    l2 = S.score_samples(p, xs, S.S_L2, n_aug=6, seed=9)
    np.testing.assert_allclose(l2, [S.score(p, x, S.S_L2) for x in xs], rtol=1e-14)


def test_auroc_examples():
    assert S.auroc([0.9, 0.4], [0.5, 0.1]) == 0.75
    assert S.auroc([3.0, 4.0], [1.0, 2.0]) == 1.0
    assert S.auroc([1.0] * 5, [1.0] * 7) == 0.5
    with pytest.raises(ContractError):
        S.auroc([], [1.0])


def test_auroc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(2)
    for _ in range(300):
        a = rng.integers(0, 6, rng.integers(1, 15)).astype(float)
        b = rng.integers(0, 6, rng.integers(1, 15)).astype(float)
        assert S.auroc(a, b) == _pairwise_auroc(a, b)


def test_auroc_monotone_invariance():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(40), rng.standard_normal(30) - 0.5
    base = S.auroc(a, b)
    assert S.auroc(2 * a + 1, 2 * b + 1) == base
    assert S.auroc(np.exp(a), np.exp(b)) == base


def test_evaluate_set_against_itself():
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(5,), feature_dim=2), 0)
    spec = D.SyntheticSpec(3, (D.Mode((0.0,) * 3, (1.0,) * 3),), 20, seed=1)
    xs = D.sample_dataset(spec)
    ev = S.evaluate(p, xs, xs, kind=S.S_MU, n_aug=4, seed=2, transforms=D.parse_transforms("gaussian-noise(0.3)"))
    assert ev.auroc == 0.5
    assert len(ev.table) == 40


def test_untrained_encoder_regression():
    # frozen value: an untrained encoder gives far anomalies larger norms
    p = enc.init_params(enc.EncoderConfig(input_dim=4, hidden_widths=(16,), feature_dim=4), 0)
    spec = D.SyntheticSpec(4, (D.Mode((0,) * 4, (1,) * 4), D.Mode((6,) * 4, (1,) * 4, 1, "anomaly")), 64, seed=0)
    xs = D.sample_dataset(spec)
    ev = S.evaluate(p, xs[:64], xs[64:], kind=S.S_MU, n_aug=8, seed=0, transforms=D.parse_transforms("gaussian-noise(0.1)"))
    assert ev.auroc == 0.0


def test_score_table_csv(tmp_path):
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(), feature_dim=2), 0)
    spec = D.SyntheticSpec(3, (D.Mode((0.0,) * 3, (1.0,) * 3),), 3, seed=1)
    xs = D.sample_dataset(spec)
    ev = S.evaluate(p, xs, xs, kind=S.S_L2, n_aug=2, seed=0)
    path = tmp_path / "scores.csv"
    ev.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sample_id,origin,score" and len(lines) == 7
    assert float(lines[1].split(",")[2]) == ev.table[0][2]


def test_unknown_kind():
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(), feature_dim=2), 0)
    with pytest.raises(ContractError):
        S.score(p, np.zeros(3), "s_max")
