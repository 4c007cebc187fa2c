"""Network structure: gates, attention, encoder, shapes, parameter count."""

import numpy as np
import pytest

from setrans import ConfigError, ShapeError, Tensor
from setrans.model import EncoderLayer, ModelConfig, SETrans, config_for_task
from setrans.tensor import no_grad

from oracles import attention_scalar, se_scalar

TINY = ModelConfig(n_classes=2, input_shape=(8, 8), channels=(2, 4),
                   reduction=2, n_heads=2, d_ff=4, seq_len=2)


def test_se_gate_matches_scalar_recomputation():
    rng = np.random.default_rng(0)
    model = SETrans(TINY, seed=1)
    stage = model.block1.stage1
    x = rng.normal(size=(2, 2, 4, 4))
    with no_grad():
        got = stage.se(Tensor(x)).data
    want = se_scalar(x, stage.se.w1.data.T, stage.se.b1.data,
                     stage.se.w2.data.T, stage.se.b2.data)
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    gates = stage.se.last_gate
    assert np.all((gates > 0.0) & (gates < 1.0))


def test_se_gate_squeeze_of_constant_channel():
    model = SETrans(TINY, seed=2)
    se = model.block1.stage1.se
    x = np.zeros((1, 2, 3, 3))
    x[0, 0] = 4.0
    x[0, 1] = -1.5
    with no_grad():
        squeezed = Tensor(x).mean(axis=(2, 3)).data
    assert np.allclose(squeezed, [[4.0, -1.5]])
    # zeroed gate weights -> sigmoid(0) = 0.5 -> output is half the input
    for p in (se.w1, se.b1, se.w2, se.b2):
        p.data = np.zeros_like(p.data)
    with no_grad():
        out = se(Tensor(x)).data
    assert np.allclose(out, 0.5 * x)


def test_attention_matches_scalar_recomputation():
    layer = EncoderLayer(d_model=8, n_heads=2, d_ff=4,
                         rng=np.random.default_rng(3), dtype=np.float64)
    x = np.random.default_rng(4).normal(size=(2, 5, 8))
    with no_grad():
        got = layer.attend(Tensor(x)).data
    for b in range(2):
        want = attention_scalar(x[b], layer.wq.data, layer.wk.data,
                                layer.wv.data, layer.wo.data, n_heads=2)
        assert np.allclose(got[b], want, rtol=0, atol=1e-12)


def test_attention_rows_sum_to_one():
    layer = EncoderLayer(8, 2, 4, np.random.default_rng(5), np.float64)
    x = np.random.default_rng(6).normal(size=(3, 7, 8))
    with no_grad():
        layer.attend(Tensor(x))
    att = layer.last_attention
    assert att.shape == (3, 2, 7, 7)
    assert np.allclose(att.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_attention_uniform_when_scores_vanish():
    """Zero Q/K projections give uniform weights; identity V/O then
    averages the sequence, so every output row is the row mean."""
    layer = EncoderLayer(4, 1, 4, np.random.default_rng(7), np.float64)
    layer.wq.data = np.zeros((4, 4))
    layer.wk.data = np.zeros((4, 4))
    layer.wv.data = np.eye(4)
    layer.wo.data = np.eye(4)
    x = np.random.default_rng(8).normal(size=(1, 6, 4))
    with no_grad():
        out = layer.attend(Tensor(x)).data
    assert np.allclose(out, np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape),
                       rtol=0, atol=1e-12)


def test_encoder_layer_matches_numpy_recomputation():
    layer = EncoderLayer(8, 2, 4, np.random.default_rng(9), np.float64)
    x = np.random.default_rng(10).normal(size=(2, 5, 8))
    with no_grad():
        got = layer(Tensor(x)).data
        att = layer.attend(Tensor(x)).data

    def ln(v, g, b):
        mu = v.mean(axis=-1, keepdims=True)
        var = v.var(axis=-1, keepdims=True)
        return (v - mu) / np.sqrt(var + 1e-5) * g + b

    mid = ln(x + att, layer.ln1_gamma.data, layer.ln1_beta.data)
    ff = np.maximum(mid @ layer.ff_w1.data + layer.ff_b1.data, 0.0)
    ff = ff @ layer.ff_w2.data + layer.ff_b2.data
    want = ln(mid + ff, layer.ln2_gamma.data, layer.ln2_beta.data)
    assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_encoder_is_permutation_equivariant():
    """No positional encoding: shuffling sequence positions shuffles the
    output the same way (up to float summation-order noise)."""
    layer = EncoderLayer(8, 2, 4, np.random.default_rng(11), np.float64)
    x = np.random.default_rng(12).normal(size=(1, 6, 8))
    perm = np.random.default_rng(13).permutation(6)
    with no_grad():
        base = layer(Tensor(x)).data
        shuffled = layer(Tensor(x[:, perm])).data
    assert np.allclose(shuffled, base[:, perm], rtol=0, atol=1e-12)


def test_forward_shapes_per_task():
    asc = SETrans(config_for_task("asc", n_classes=10), seed=0)
    x = np.random.default_rng(14).normal(size=(4, 500, 40))
    with no_grad():
        assert asc.embed(x).shape == (4, 16, 128)
        assert asc(x).shape == (4, 10)

    asd = SETrans(config_for_task("asd", n_classes=3), seed=0)
    w = np.random.default_rng(15).normal(size=(4, 64, 128))
    with no_grad():
        assert asd(w).shape == (4, 3)


def test_forward_handles_odd_frame_count():
    """401-frame inputs trim to 400 before pooling (floor semantics)."""
    ust = SETrans(config_for_task("ust", n_classes=8), seed=0)
    x = np.random.default_rng(16).normal(size=(2, 401, 64))
    with no_grad():
        logits = ust(x)
        trimmed = ust(np.pad(x[:, :400], ((0, 0), (0, 1), (0, 0)),
                             mode="constant", constant_values=99.0))
    assert logits.shape == (2, 8)
    # frame 400 is cut, so poisoning it cannot change anything
    assert np.array_equal(logits.data, trimmed.data)


def test_forward_rejects_wrong_shape():
    model = SETrans(config_for_task("asc", n_classes=10), seed=0)
    with pytest.raises(ShapeError):
        model(np.zeros((2, 401, 64)))
    with pytest.raises(ShapeError):
        model(np.zeros((500, 40)))


def test_eval_forward_is_deterministic_and_batch_independent():
    model = SETrans(TINY, seed=3)
    rng = np.random.default_rng(17)
    x = rng.normal(size=(3, 8, 8))
    with no_grad():
        a = model(x).data
        b = model(x).data
        dup = model(np.concatenate([x, x[:1]])).data
    assert np.array_equal(a, b)
    assert np.allclose(dup[3], a[0], rtol=0, atol=1e-12)


def test_zero_input_zero_biases_gives_zero_blocks():
    model = SETrans(TINY, seed=4)
    with no_grad():
        seq = model.embed(np.zeros((2, 8, 8))).data
    assert np.all(seq == 0.0)


def test_param_count_in_band_and_seed_invariant():
    cfg = config_for_task("asc", n_classes=10)
    count = SETrans(cfg, seed=0).param_count()
    assert 3.0e5 <= count <= 5.0e5
    assert SETrans(cfg, seed=99).param_count() == count


def test_param_count_delta_when_widening_ffn():
    base = SETrans(config_for_task("asc", n_classes=10, d_ff=32), seed=0).param_count()
    wide = SETrans(config_for_task("asc", n_classes=10, d_ff=64), seed=0).param_count()
    assert wide - base == 2 * 128 * 32 + 32


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(n_classes=2, input_shape=(8, 8), channels=(3, 4),
                    reduction=2, n_heads=2, d_ff=4, seq_len=2)  # 2 does not divide 3
    with pytest.raises(ConfigError):
        ModelConfig(n_classes=2, input_shape=(8, 8), channels=(2, 6),
                    reduction=2, n_heads=4, d_ff=4, seq_len=2)  # 4 heads on width 6
    with pytest.raises(ConfigError):
        ModelConfig(n_classes=2, input_shape=(6, 8), channels=(2, 4),
                    reduction=2, n_heads=2, d_ff=4, seq_len=2)  # 6//4 < seq_len
    with pytest.raises(ConfigError):
        config_for_task("nope", n_classes=2)


def test_load_state_round_trip_and_mismatch():
    m1 = SETrans(TINY, seed=5)
    m2 = SETrans(TINY, seed=6)
    x = np.random.default_rng(18).normal(size=(2, 8, 8))
    with no_grad():
        before = m2(x).data
    params = {k: v.data.copy() for k, v in m1.parameters().items()}
    buffers = {k: v.copy() for k, v in m1.buffers().items()}
    m2.load_state(params, buffers)
    with no_grad():
        after = m2(x).data
        want = m1(x).data
    assert not np.array_equal(before, after)
    assert np.array_equal(after, want)

    bad = dict(params)
    bad["head.w"] = np.zeros((3, 3))
    with pytest.raises(ShapeError):
        m2.load_state(bad, buffers)
    missing = dict(params)
    del missing["head.b"]
    with pytest.raises(ShapeError):
        m2.load_state(missing, buffers)


def test_training_mode_updates_bn_buffers_eval_does_not():
    model = SETrans(TINY, seed=7)
    x = np.random.default_rng(19).normal(size=(4, 8, 8))
    before = {k: v.copy() for k, v in model.buffers().items()}
    with no_grad():
        model(x, training=False)
    for k, v in model.buffers().items():
        assert np.array_equal(before[k], v)
    with no_grad():
        model(x, training=True)
    changed = [k for k, v in model.buffers().items()
               if not np.array_equal(before[k], v)]
    assert changed  # every stage saw data, so stats moved
