import numpy as np
import pytest

from oecl import encoder as enc
from oecl import tensor as T
from oecl.errors import ConfigError, DimensionError, ParseError


def _manual_forward(arrays, x):
    ws, bs = arrays[0::2], arrays[1::2]
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        out = np.zeros((h.shape[0], w.shape[1]))
        for r in range(h.shape[0]):
            for c in range(w.shape[1]):
                out[r, c] = h[r] @ w[:, c] + b[c]
        h = np.maximum(out, 0.0) if i < len(ws) - 1 else out
    return h


def test_config_rejects_tiny_feature_dim():
    with pytest.raises(ConfigError):
        enc.EncoderConfig(feature_dim=1)


def test_init_shapes_and_determinism():
    cfg = enc.EncoderConfig(input_dim=5, hidden_widths=(7, 3), feature_dim=4)
    p, q = enc.init_params(cfg, 11), enc.init_params(cfg, 11)
    assert [a.shape for a in p.arrays()] == [(5, 7), (7,), (7, 3), (3,), (3, 4), (4,)]
    assert all(a.tobytes() == b.tobytes() for a, b in zip(p.arrays(), q.arrays()))
    assert enc.init_params(cfg, 12).arrays()[0].tobytes() != p.arrays()[0].tobytes()


def test_degenerate_mlp_is_linear():
    cfg = enc.EncoderConfig(input_dim=3, hidden_widths=(), feature_dim=3)
    p = enc.init_params(cfg, 0)
    assert len(p.weights) == 1 and p.weights[0].shape == (3, 3)
    ident = enc.EncoderParams.from_arrays([np.eye(3), np.zeros(3)])
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(enc.embed(ident, x).data, x)


def test_init_weight_mean_is_zero():
    cfg = enc.EncoderConfig(input_dim=100, hidden_widths=(1000,), feature_dim=2)
    p = enc.init_params(cfg, 0)
    # rescale each layer to U(-1, 1) so the pooled draws share one variance
    draws = np.concatenate([w.numpy().ravel() * np.sqrt(w.shape[0]) for w in p.weights])
    assert draws.size >= 100_000
    se = np.sqrt(1.0 / 3.0) / np.sqrt(draws.size)
    assert abs(draws.mean()) < 3 * se
    assert np.all(np.abs(draws) <= 1.0)


def test_zero_params_give_zero_features():
    cfg = enc.EncoderConfig(input_dim=4, hidden_widths=(6,), feature_dim=3)
    zero = enc.EncoderParams.from_arrays([np.zeros_like(a) for a in enc.init_params(cfg, 0).arrays()])
    x = np.random.default_rng(0).standard_normal((5, 4))
    assert np.all(enc.embed(zero, x).data == 0.0)


def test_embed_matches_unrolled_oracle():
    rng = np.random.default_rng(1)
    cfg = enc.EncoderConfig(input_dim=4, hidden_widths=(5, 6), feature_dim=3)
    arrays = [rng.standard_normal(a.shape) for a in enc.init_params(cfg, 0).arrays()]
    p = enc.EncoderParams.from_arrays(arrays)
    x = rng.standard_normal((7, 4))
    np.testing.assert_allclose(enc.embed(p, x).data, _manual_forward(arrays, x), rtol=0, atol=1e-13)
    np.testing.assert_array_equal(enc.embed_array(p, x), enc.embed(p, x).data)


def test_embed_checks_input_width():
    p = enc.init_params(enc.EncoderConfig(input_dim=4), 0)
    with pytest.raises(DimensionError):
        enc.embed(p, np.ones((2, 5)))


def test_project():
    np.testing.assert_allclose(enc.project([[3.0, 4.0]]).data, [[0.6, 0.8]], atol=1e-15)
    rng = np.random.default_rng(2)
    z = enc.project(rng.standard_normal((20, 5))).data
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(enc.project(z).data, z, atol=1e-9)


def test_represent_respects_normalize_flag():
    cfg = enc.EncoderConfig(input_dim=3, hidden_widths=(4,), feature_dim=2, normalize_output=False)
    p = enc.init_params(cfg, 0)
    x = np.random.default_rng(3).standard_normal((4, 3))
    f, z = enc.represent(p, x, cfg)
    assert z is f


def test_embed_is_differentiable():
    cfg = enc.EncoderConfig(input_dim=3, hidden_widths=(4,), feature_dim=2)
    base = enc.init_params(cfg, 5).arrays()
    x = np.random.default_rng(4).standard_normal((6, 3))

    def loss(*arrays):
        p = enc.EncoderParams(tuple(arrays[0::2]), tuple(arrays[1::2]))
        return T.sum(T.row_l2_norm(enc.embed(p, x)))

    assert T.grad_check(loss, base) < 1e-6


def test_checkpoint_round_trip(tmp_path):
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(4, 5), feature_dim=2), 9)
    path = tmp_path / "ckpt.bin"
    enc.save_params(p, path)
    q = enc.load_params(path)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(p.arrays(), q.arrays()))
    assert path.read_bytes()[:8] == enc.CHECKPOINT_MAGIC


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"nonsense")
    with pytest.raises(ParseError):
        enc.load_params(path)
    p = enc.init_params(enc.EncoderConfig(input_dim=3, hidden_widths=(), feature_dim=2), 0)
    enc.save_params(p, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError):
        enc.load_params(path)
