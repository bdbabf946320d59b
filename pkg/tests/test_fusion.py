import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from medsumm_kit.fusion import (
    FusionConfig,
    FusionModel,
    base_forward,
    encode_inputs,
    forward,
    generate,
    next_token_probs,
    parse_target,
    quantize,
)
from medsumm_kit.fusion.quant import block_error_bound
from medsumm_kit.fusion.toy import (
    gradient_check,
    tiny_config,
    tiny_examples,
    to_examples,
    toy_task,
    toy_vocab,
    train,
    unimodal,
)


# quantization

def test_quantize_known_codes():
    q = quantize([7.0, -7.0, 3.5], block=4)
    assert q.codes.tolist() == [7, -7, 4]
    assert q.scales.tolist() == [1.0]
    assert q.dequantize().tolist() == [7.0, -7.0, 4.0]


def test_zero_tensor_roundtrips():
    q = quantize(np.zeros((3, 5)), block=4)
    assert np.array_equal(q.dequantize(), np.zeros((3, 5)))


def test_quantize_rejects_bad_block():
    with pytest.raises(ValueError):
        quantize([1.0], block=0)


def test_error_bound_random_tensors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        shape = tuple(rng.integers(1, 9, rng.integers(1, 3)))
        block = int(rng.integers(1, 40))
        t = rng.normal(0, rng.uniform(0.01, 10), shape)
        q = quantize(t, block)
        assert np.all(np.abs(q.codes) <= 7)
        assert np.all(np.abs(q.dequantize() - t) <= block_error_bound(t, block) + 1e-12)


@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)), st.integers(1, 33))
def test_quantize_is_deterministic_and_bounded(t, block):
    a, b = quantize(t, block), quantize(t, block)
    assert a == b
    assert np.all(np.abs(a.dequantize() - t) <= block_error_bound(t, block) * (1 + 1e-12) + 1e-300)


# inputs and forward

@pytest.fixture
def model():
    return FusionModel.init(FusionConfig())


def test_zero_vision_gives_position_row(model):
    x = encode_inputs(model, np.zeros(model.config.vision_dim), [1, 2])
    assert np.array_equal(x[0], model.weight("pos")[0])
    assert x.shape == (3, model.config.text_dim)


def test_basis_vision_selects_projection_column(model):
    e = np.zeros(model.config.vision_dim)
    e[2] = 1.0
    x = encode_inputs(model, e, [1])
    assert np.allclose(x[0], model.params["proj"][:, 2] + model.weight("pos")[0], atol=1e-15)


def test_encode_errors(model):
    with pytest.raises(ValueError):
        encode_inputs(model, np.zeros(model.config.vision_dim + 1), [1])
    with pytest.raises(ValueError):
        encode_inputs(model, None, [1])
    with pytest.raises(ValueError):
        encode_inputs(model, np.zeros(model.config.vision_dim), [model.config.vocab_size])
    with pytest.raises(ValueError):
        encode_inputs(model, np.zeros(model.config.vision_dim), [1] * model.config.context_len)


def test_zero_adapters_match_base_bitwise(model):
    x = encode_inputs(model, np.ones(model.config.vision_dim), [1, 5, 7])
    assert np.array_equal(forward(model, x), base_forward(model, x))


def test_forward_matches_loop_oracle(model):
    rng = np.random.default_rng(3)
    for k in ("b_q", "b_v"):
        model.params[k] = rng.normal(0, 0.2, model.params[k].shape)
    x = encode_inputs(model, rng.normal(size=model.config.vision_dim), [1, 6, 9, 4])
    w = [model.effective_weight(n) for n in ("w_q", "w_k", "w_v", "w_o")]
    want = oracles.attention_forward_loops(x, *w, model.weight("head"))
    assert np.max(np.abs(forward(model, x) - want)) < 1e-10


def test_causality(model):
    rng = np.random.default_rng(1)
    x = encode_inputs(model, rng.normal(size=model.config.vision_dim), [1, 6, 9, 4, 3])
    base = forward(model, x)
    for t in range(x.shape[0]):
        y = x.copy()
        y[t] += rng.normal(size=x.shape[1])
        out = forward(model, y)
        assert np.array_equal(out[:t], base[:t])


def test_probabilities_sum_to_one(model):
    x = encode_inputs(model, np.ones(model.config.vision_dim), [1, 2, 3])
    p = next_token_probs(model, x)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-12)


# training

def toy(seed=0, multimodal=True):
    cfg = FusionConfig(seed=seed, multimodal=multimodal)
    vocab = toy_vocab(cfg.vocab_size)
    samples = toy_task(cfg, vocab, seed=seed)
    return FusionModel.init(cfg), vocab, samples, to_examples(cfg, samples)


def test_zero_lr_changes_nothing():
    m, _, _, ex = toy()
    before = {k: v.copy() for k, v in m.params.items()}
    train(m, ex, steps=3, learning_rate=0.0)
    assert all(np.array_equal(before[k], m.params[k]) for k in before)


def test_training_reduces_loss_and_keeps_base_frozen():
    m, _, _, ex = toy()
    digest = m.frozen_digest()
    log = train(m, ex, steps=200, learning_rate=0.3)
    assert log.ratio < 0.5
    assert m.frozen_digest() == digest


def test_unimodal_variant_trains():
    m, _, _, ex = toy(multimodal=False)
    assert ex[0].vision is None
    log = train(m, ex, steps=50, learning_rate=0.3)
    assert log.final < log.initial


@pytest.mark.parametrize("seed", range(10))
def test_gradient_check(seed):
    cfg = tiny_config(seed)
    result = gradient_check(FusionModel.init(cfg), tiny_examples(cfg, seed=seed), seed=seed)
    assert result.max_rel_error < 1e-3
    assert result.n_checked == FusionModel.init(cfg).n_trainable


def test_gradient_check_unimodal():
    cfg = unimodal(tiny_config(5))
    assert gradient_check(FusionModel.init(cfg), tiny_examples(cfg, seed=5)).max_rel_error < 1e-3


def test_overfit_single_sample_regenerates_target():
    m, vocab, samples, ex = toy()
    train(m, ex[:1], steps=1000, learning_rate=0.2)
    s = samples[0]
    out = generate(m, s.vision, s.prompt_ids, 12, vocab)
    assert not out.parse_failed
    assert out.raw == s.target_text
    again = generate(m, s.vision, s.prompt_ids, 12, vocab)
    assert again == out


def test_generate_with_no_budget_flags_failure():
    m, vocab, samples, _ = toy()
    out = generate(m, samples[0].vision, samples[0].prompt_ids, 0, vocab)
    assert out.parse_failed and out.summary == ""


def test_parse_target():
    out = parse_target("SYMPTOM: rash | SUMMARY: skin itching")
    assert (out.symptom_note, out.summary, out.parse_failed) == ("rash", "skin itching", False)
    assert parse_target("rash skin").parse_failed


def test_checkpoint_roundtrip(tmp_path):
    m, _, _, ex = toy()
    train(m, ex, steps=5, learning_rate=0.3)
    m.save(tmp_path / "m.npz")
    back = FusionModel.load(tmp_path / "m.npz")
    assert back.config == m.config
    assert back.frozen_digest() == m.frozen_digest()
    x = encode_inputs(m, ex[0].vision, ex[0].input_ids)
    assert np.array_equal(forward(back, x), forward(m, x))


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(adapter_rank=0)
    with pytest.raises(ValueError):
        FusionConfig(vocab_size=0)


def test_full_scale_forward_pass():
    cfg = FusionConfig.full_scale(vocab_size=64)
    assert cfg.text_dim == 4096 and cfg.vision_dim == 768 and cfg.adapter_rank == 8
    m = FusionModel.init(cfg)
    x = encode_inputs(m, np.ones(cfg.vision_dim), [1, 2, 3])
    logits = forward(m, x)
    assert logits.shape == (4, cfg.vocab_size) and np.all(np.isfinite(logits))
