import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from materium.core.errors import CheckpointMismatch, ConfigError, OddHeadDim, SequenceTooLong, StoichOutOfTable, UnknownCondition
from materium.model.attention import causal_mask, masked_attention
from materium.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from materium.model.conditions import ConditionSet, embed_conditions
from materium.model.rmsnorm import rmsnorm
from materium.model.rope import rope_apply
from materium.model.swiglu import swiglu_ffn
from materium.model.transformer import DecoderTransformer, ModelConfig, count_params
from materium.tokenizer.vocab import build_vocab
from materium.train.loss import build_targets, cross_entropy


# ---------- layers ----------

def test_rmsnorm():
    assert_allclose(rmsnorm(np.array([3.0, 4.0]), np.ones(2)), [3 / math.sqrt(12.5), 4 / math.sqrt(12.5)], rtol=1e-6)
    assert_allclose(rmsnorm(np.array([1.0, 1.0]), np.array([2.0, 0.5])), [2.0, 0.5], rtol=1e-6)


def test_rope():
    x = np.array([[1.0, 0.0]])
    assert_allclose(rope_apply(x, [0]), x)
    assert_allclose(rope_apply(x, [1]), [[math.cos(1.0), math.sin(1.0)]], atol=1e-12)
    y = np.random.default_rng(0).normal(size=(5, 8))
    assert_allclose(np.linalg.norm(rope_apply(y, np.arange(5)), axis=-1), np.linalg.norm(y, axis=-1))
    with pytest.raises(OddHeadDim):
        rope_apply(np.ones((1, 3)), [0])


def test_rope_relative_positions():
    rng = np.random.default_rng(1)
    q, k = rng.normal(size=(1, 8)), rng.normal(size=(1, 8))
    a = rope_apply(q, [3]) @ rope_apply(k, [1]).T
    b = rope_apply(q, [7]) @ rope_apply(k, [5]).T
    assert_allclose(a, b, rtol=1e-10)


def test_causal_mask():
    m = causal_mask(3)
    assert_array_equal(np.isinf(m), [[False, True, True], [False, False, True], [False, False, False]])
    assert_array_equal(np.isinf(causal_mask(1, 3, 2)), [[False, False, False]])


def test_masked_attention():
    V = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    out, w = masked_attention(np.zeros((3, 2)), np.zeros((3, 2)), V)
    assert_allclose(w, [[1, 0, 0], [0.5, 0.5, 0], [1 / 3, 1 / 3, 1 / 3]])
    assert_allclose(out[0], V[0])
    assert_allclose(out[2], V.mean(axis=0))


def test_swiglu_zero_gate():
    x = np.ones((1, 2))
    assert_allclose(swiglu_ffn(x, np.zeros((2, 3)), np.ones((2, 3)), np.ones((3, 2))), np.zeros((1, 2)))


# ---------- configuration and parameters ----------

def test_full_model_parameter_count():
    assert count_params(ModelConfig.full(1288)) == 42_299_904


def test_hand_counted_parameters():
    config = ModelConfig(vocab_size=16, n_layers=1, n_heads=2, d_emb=8, d_ffn_hidden=16,
                         condition_schema=(), use_formula=False)
    assert count_params(config) == 920
    params = DecoderTransformer(config).init_params(0)
    assert sum(p.size for p in params.values()) == 920


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=16, d_emb=30, n_heads=4).validate()
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=16, condition_schema=("bulk_modulus",)).validate()
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"vocab_size": 16, "width": 3})


def test_init_is_seeded(small_model):
    a, b = small_model.init_params(3), small_model.init_params(3)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert np.all(np.abs(a["tok_emb"]) <= 2 * small_model.config.init_std)
    assert_array_equal(a["final_norm"], 1.0)


# ---------- conditions ----------

def test_prefix_length(small_model):
    assert small_model.prefix_length(ConditionSet.from_raw({"formula": "Fe2O3"})) == 7
    assert small_model.prefix_length(ConditionSet.from_raw({"density": 5.0})) == 6


def test_condition_set_from_raw():
    cs = ConditionSet.from_raw({"band_gap": 0.0, "hhi": 2000, "formula": "Fe2O3"})
    assert cs.values["hhi"] == 2.0
    assert cs.formula == (("Fe", 2), ("O", 3))
    assert cs.present() == ["band_gap", "hhi"]
    assert cs.targets()["formula"] == "Fe2O3"
    assert cs.drop(["hhi"], formula=True).present() == ["band_gap"]
    with pytest.raises(UnknownCondition):
        ConditionSet.from_raw({"bulk_modulus": 1.0})


def test_condition_embedding_errors(small_model):
    params = small_model.init_params(0)
    with pytest.raises(StoichOutOfTable):
        small_model.conditions.embed(params, ConditionSet.from_raw({"formula": "Fe21O"}))
    schema_free = DecoderTransformer(ModelConfig(vocab_size=16, n_layers=1, n_heads=2, d_emb=8, d_ffn_hidden=8,
                                                 condition_schema=("density",), use_formula=False))
    with pytest.raises(UnknownCondition):
        schema_free.conditions.embed(schema_free.init_params(0), ConditionSet.from_raw({"hhi": 1000}))


def test_embed_conditions(small_model):
    params = small_model.init_params(0)
    cs = ConditionSet.from_raw({"density": 3.0})
    prefix = embed_conditions(cs, params, small_model.conditions)
    schema = small_model.config.condition_schema
    assert prefix.shape == (small_model.prefix_length(cs), small_model.config.d_emb)
    i = schema.index("density")
    assert_allclose(prefix[i], 3.0 * params["cond.density.value_w"] + params["cond.density.value_b"]
                    + params["cond.density.label"])
    j = schema.index("hhi")
    assert_allclose(prefix[j], params["cond.hhi.nan"] + params["cond.hhi.label"])


# ---------- forward ----------

def test_forward_shapes(small_model):
    params = small_model.init_params(0)
    cs = ConditionSet.from_raw({"density": 3.0})
    logits = small_model.forward_logits([0, 2, 1030], cs, params)
    assert logits.shape == (small_model.prefix_length(cs) + 3, small_model.config.vocab_size)
    with pytest.raises(SequenceTooLong):
        small_model.forward_logits(list(range(200)), cs, params)


def test_causality(small_model):
    params = small_model.init_params(0)
    cs = ConditionSet.from_raw({"band_gap": 1.0})
    P = small_model.prefix_length(cs)
    a = small_model.forward_logits([0, 2, 1100, 10, 20, 30], cs, params)
    b = small_model.forward_logits([0, 2, 1100, 10, 999, 500], cs, params)
    assert_allclose(a[:P + 4], b[:P + 4], rtol=1e-12, atol=1e-12)
    assert not np.allclose(a[P + 4:], b[P + 4:])


def test_padding_does_not_leak(small_model):
    params = small_model.init_params(0)
    cs = ConditionSet.from_raw({"density": 2.0})
    alone = small_model.forward_logits([0, 2, 1100, 10], cs, params)
    batched, _ = small_model.forward(params, [[0, 2, 1100, 10], [0, 2, 1100, 10, 11, 12, 13]], [cs, cs])
    assert_allclose(batched[0, :alone.shape[0]], alone, rtol=1e-10, atol=1e-12)


def test_dropout_needs_rng(vocab, tables):
    model = DecoderTransformer(ModelConfig.tiny(vocab.total_size, n_layers=1, d_emb=16, d_ffn_hidden=16), tables)
    with pytest.raises(ValueError):
        model.forward(model.init_params(0), [[0, 2]], [ConditionSet()], train=True)


# ---------- gradients ----------

def _batch_loss(model, params, tokens, conds):
    logits, cache = model.forward(params, tokens, conds)
    targets = build_targets(cache.prefix_lens, tokens, logits.shape[1])
    loss, dlogits = cross_entropy(logits, targets)
    return loss, dlogits, cache


def test_gradients_match_finite_differences(tables):
    config = ModelConfig(vocab_size=40, n_layers=2, n_heads=2, d_emb=16, d_ffn_hidden=24, dropout_rate=0.0,
                         max_seq_len=32, condition_schema=("band_gap", "density", "hhi"), init_std=0.3)
    model = DecoderTransformer(config, tables)
    params = model.init_params(7)
    tokens = [[0, 1, 5, 9, 17, 33, 2], [0, 3, 8, 21]]
    conds = [ConditionSet.from_raw({"density": 4.0, "formula": "Fe2O3"}),
             ConditionSet.from_raw({"band_gap": 1.5, "hhi": 1200})]
    _, dlogits, cache = _batch_loss(model, params, tokens, conds)
    grads = model.backward(params, dlogits, cache)

    h = 1e-4
    for name, p in params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for i in np.argsort(-np.abs(g), kind="stable")[:3]:
            old = flat[i]
            flat[i] = old + h
            up = _batch_loss(model, params, tokens, conds)[0]
            flat[i] = old - h
            down = _batch_loss(model, params, tokens, conds)[0]
            flat[i] = old
            numeric = (up - down) / (2 * h)
            assert abs(numeric - g[i]) <= 1e-4 * max(abs(numeric) + abs(g[i]), 1e-5), (name, int(i), numeric, g[i])


def test_present_condition_leaves_nan_vector_untouched(small_model):
    params = small_model.init_params(0)
    tokens = [[0, 1, 1100, 10, 11, 12, 3]]
    _, dlogits, cache = _batch_loss(small_model, params, tokens, [ConditionSet.from_raw({"density": 3.0})])
    grads = small_model.backward(params, dlogits, cache)
    assert_array_equal(grads["cond.density.nan"], 0.0)
    assert np.any(grads["cond.density.value_w"] != 0.0)
    assert np.any(grads["cond.hhi.nan"] != 0.0)


# ---------- checkpoints ----------

def test_checkpoint_round_trip(tmp_path, small_model, vocab):
    params = small_model.init_params(0)
    ckpt = Checkpoint(small_model.config, params, vocab.hash(), ordering="Random(3)", coords_first=True,
                      train_state={"epoch": 2})
    path = save_checkpoint(tmp_path / "model.npz", ckpt)
    loaded = load_checkpoint(path, vocab)
    assert loaded.config == small_model.config
    assert all(np.array_equal(loaded.params[k], params[k]) for k in params)
    assert str(loaded.strategy) == "Random(3)" and loaded.coords_first
    assert loaded.train_state == {"epoch": 2}
    assert loaded.opt_m is None


def test_checkpoint_rejects_other_vocab(tmp_path, small_model, vocab, tables):
    path = save_checkpoint(tmp_path / "model.npz", Checkpoint(small_model.config, small_model.init_params(0),
                                                               vocab.hash()))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, build_vocab({"H": (1,)}, tables))


def test_checkpoint_rejects_bad_shapes_and_files(tmp_path, small_model, vocab):
    params = small_model.init_params(0)
    params["lm_head"] = params["lm_head"][:, :10]
    path = save_checkpoint(tmp_path / "bad.npz", Checkpoint(small_model.config, params, vocab.hash()))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path)
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(junk)
