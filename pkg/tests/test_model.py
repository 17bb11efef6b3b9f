import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spear import checkpoint
from spear.errors import ConfigError, DataError, FormatError, NumericError
from spear.model import (ModelConfig, _layernorm, aggregate, assemble_input, classify, embed,
                         encoder_forward, forward, init_model, predict_window, sigmoid)
from spear.series import ScaleParams, quantize_window

SMALL = dict(d_model=16, n_layers=2, n_heads=2, d_ff=32, n_bins=10, prompt_len=3, max_seq_len=15)


def small(seed=0, dtype=np.float64, **kw):
    return init_model(ModelConfig(**{**SMALL, **kw, "seed": seed}), dtype)


def test_init_deterministic():
    assert small(1).checksum() == small(1).checksum()
    assert small(1).checksum() != small(2).checksum()


def test_init_conventions():
    m = small()
    for layer in m.encoder:
        assert np.all(layer["ln1_g"] == 1) and np.all(layer["ln2_g"] == 1)
        assert np.all(layer["ln1_b"] == 0)
    assert m.head_b.tolist() == [0.0]
    assert abs(m.embedding.std() - 0.02) < 0.005


@pytest.mark.parametrize("kw", [
    {"d_model": 32, "n_heads": 3}, {"prompt_len": 0}, {"max_seq_len": 3}, {"n_bins": 1},
    {"aggregate": "median"},
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**{**SMALL, **kw})


def test_float32_and_float64_share_values():
    a, b = small(dtype=np.float32), small(dtype=np.float64)
    np.testing.assert_array_equal(a.embedding, b.embedding.astype(np.float32))


def test_embed_lookup_and_positions():
    m = small()
    e = embed(m, [4, 4])
    m0 = m.config.prompt_len
    np.testing.assert_array_equal(e[0], m.embedding[4] + m.positions[m0])
    np.testing.assert_allclose(e[1] - e[0], m.positions[m0 + 1] - m.positions[m0], atol=1e-15)


def test_embed_rejects():
    m = small()
    with pytest.raises(DataError):
        embed(m, [10])
    with pytest.raises(DataError):
        embed(m, np.zeros(13, dtype=int))


def test_assemble_lengths():
    P = np.zeros((20, 8))
    S, ext = assemble_input(P, np.ones((100, 8)), np.r_[np.ones(90, bool), np.zeros(10, bool)])
    assert S.shape == (120, 8)
    assert ext[:20].all() and ext[20:110].all() and not ext[110:].any()


def test_encoder_shape_and_padding_invariance():
    m = small()
    tokens = np.array([[1, 2, 3, 4, 5, 0], [1, 2, 3, 4, 5, 9]])
    mask = np.array([[1, 1, 1, 1, 1, 0]] * 2, dtype=bool)
    S, ext = assemble_input(m.prompts, embed(m, tokens), mask)
    h = encoder_forward(S, ext, m)
    assert h.shape == (2, 9, 16)
    np.testing.assert_allclose(h[0, :8], h[1, :8], rtol=0, atol=1e-12)


def test_zero_layers_is_identity():
    m = small(n_layers=0)
    S = np.random.default_rng(0).normal(size=(6, 16))
    np.testing.assert_array_equal(encoder_forward(S, np.ones(6, bool), m), S)


def test_attention_rows_sum_to_one():
    from spear.model import _attention
    m = small()
    rng = np.random.default_rng(2)
    a = rng.normal(size=(2, 7, 16))
    mask = np.ones((2, 7), bool)
    mask[0, 5:] = False
    bias = np.where(mask, 0.0, -np.inf)[:, None, None, :]
    _, (_, _, _, attn, _) = _attention(a, m.encoder[0], bias, 2)
    np.testing.assert_allclose(attn.sum(-1), 1.0, atol=1e-6)
    assert np.all(attn[0, :, :, 5:] == 0)


@given(st.integers(0, 2 ** 31), st.floats(0.01, 100))
def test_layernorm_statistics(seed, scale):
    x = np.random.default_rng(seed).normal(0, scale, (4, 32))
    y, _ = _layernorm(x, np.ones(32), np.zeros(32))
    np.testing.assert_allclose(y.mean(-1), 0, atol=1e-5)
    var = x.var(-1)
    np.testing.assert_allclose(y.var(-1), var / (var + 1e-5), atol=1e-5)


def test_classify_basics():
    h = np.zeros((5, 4))
    probs, score = classify(h, np.zeros(4), np.zeros(1), np.ones(3, bool), 2)
    assert np.all(probs == 0.5) and score == 0.5
    p = np.array([[0.3, 0.3, 0.3]])
    for how in ("mean", "max"):
        assert aggregate(p, np.ones((1, 3), bool), how)[0] == pytest.approx(0.3)
        assert aggregate(np.array([[0.7, 0.1]]), np.array([[True, False]]), how)[0] == pytest.approx(0.7)


def test_sigmoid_stable():
    z = np.array([-1000.0, 0.0, 1000.0])
    assert sigmoid(z).tolist() == [0.0, 0.5, 1.0]


def window_of(values, max_len, n_bins=10):
    return quantize_window(values, n_bins, max_len, scale=ScaleParams(0, 1))


def test_predict_window_padding_invariant():
    m = small()
    vals = np.linspace(0, 1, 8)
    a, pa = predict_window(m, window_of(vals, 8))
    b, pb = predict_window(m, window_of(vals, 12))
    assert abs(a - b) <= 1e-9 and 0 < a < 1
    np.testing.assert_allclose(pa, pb, atol=1e-9)
    assert predict_window(m, window_of(vals, 8))[0] == a


def test_predict_window_too_long():
    with pytest.raises(DataError):
        predict_window(small(), window_of(np.zeros(13), 13))


def test_score_depends_on_prompts():
    m = small()
    m.head_w = np.random.default_rng(0).normal(0, 1, 16)
    tokens, mask = np.array([[1, 5, 7, 2]]), np.ones((1, 4), bool)
    base = forward(m, tokens, mask)[0][0]
    m.prompts = np.zeros_like(m.prompts)
    assert forward(m, tokens, mask)[0][0] != base


def test_forward_rejects_empty_window():
    with pytest.raises(DataError):
        forward(small(), np.zeros((1, 4), int), np.zeros((1, 4), bool))


def test_nonfinite_activation_names_layer():
    m = small()
    m.encoder[1]["w2"][0, 0] = np.inf
    with pytest.raises(NumericError, match="layer 1"):
        forward(m, np.array([[1, 2]]), np.ones((1, 2), bool))


# -- checkpoint -----------------------------------------------------------------

def trained_like(seed=0):
    m = small(seed, np.float32)
    rng = np.random.default_rng(seed)
    m.prompts = rng.normal(size=m.prompts.shape).astype(np.float32)
    m.head_w = rng.normal(size=m.head_w.shape).astype(np.float32)
    m.head_b = np.array([0.25], np.float32)
    return m


@pytest.mark.parametrize("embedded", [False, True])
def test_checkpoint_round_trip(tmp_path, embedded):
    m = trained_like()
    path = tmp_path / "m.ckpt"
    checkpoint.save_artifact(path, m, embed_frozen=embedded)
    back = checkpoint.load_artifact(path)
    assert back.checksum() == m.checksum()
    assert back.config == m.config
    assert path.read_bytes()[:8] == b"SPEARCKP"


def test_checkpoint_embedded_frozen_survives_seed_change():
    m = trained_like()
    m.encoder[0]["wq"][0, 0] = 3.0  # not reproducible from the seed
    assert checkpoint.loads(checkpoint.dumps(m, True)).checksum() == m.checksum()
    assert checkpoint.loads(checkpoint.dumps(m, False)).checksum() != m.checksum()


def test_checkpoint_truncated():
    blob = checkpoint.dumps(trained_like())
    with pytest.raises(FormatError, match="crc32"):
        checkpoint.loads(blob[:-10] + blob[-4:])
    with pytest.raises(FormatError, match="crc32"):
        checkpoint.loads(blob[:-1] + bytes([blob[-1] ^ 1]))


def test_checkpoint_version_and_magic():
    blob = bytearray(checkpoint.dumps(trained_like()))
    blob[8] = 2
    with pytest.raises(FormatError, match="version"):
        checkpoint.loads(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        checkpoint.loads(b"NOTACKPT" + bytes(blob[8:]))


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31))
def test_checkpoint_deterministic_bytes(seed):
    assert checkpoint.dumps(trained_like(seed)) == checkpoint.dumps(trained_like(seed))
