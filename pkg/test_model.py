"""
Test script for the toy decoder and LoRA adapters
=================================================
"""

import math

import numpy as np
import pytest

from errors import DimensionError, SeqLenError
from model import LoraAdapter, ModelConfig, ToyDecoder, lora_apply, lora_delta
from numerics import IGNORE_INDEX, Tensor, active_tape, backward, numeric_gradient, softmax_cross_entropy_ignore
from sequence_builder import SequenceBuilder
from tokenizer import build_vocab

SMALL = ModelConfig(vocab_size=12, d_model=8, n_layers=2, n_heads=2, max_seq_len=16,
                    lora_rank=2, lora_alpha=4.0, mlp_ratio=2, d_audio=4, seed=3)
K = 3


def small_model(**overrides):
    cfg = SMALL if not overrides else ModelConfig(**{**SMALL.to_dict(), **overrides})
    return ToyDecoder(cfg)


def sample_sequence(rng, vocab_size=12):
    builder = SequenceBuilder(placeholder_id=3, audio_slot_count=K, bos_id=0)
    prompt = [int(i) for i in rng.integers(4, vocab_size, size=3)]
    answer = [int(i) for i in rng.integers(4, vocab_size, size=2)] + [1]
    return builder.build_interleaved(prompt[:1] + [3] + prompt[1:], answer)


def model_loss(model, seq, h):
    block = model.project_audio(h)
    logits = model.forward(model.embed_sequence(seq, block))
    return softmax_cross_entropy_ignore(logits, seq.labels)


def test_zero_adapters_leave_logits_bit_identical():
    model = small_model()
    rng = np.random.default_rng(0)
    inputs = Tensor(rng.normal(size=(7, SMALL.d_model)))
    with_adapters = model.forward(inputs, use_adapters=True).data
    without = model.forward(inputs, use_adapters=False).data
    assert np.array_equal(with_adapters, without)


def test_adapter_delta_is_linear_in_alpha():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(5, 6)))
    A, B = Tensor(rng.normal(size=(2, 6))), Tensor(rng.normal(size=(4, 2)))
    one = lora_delta(x, LoraAdapter(A, B, alpha=3.0, rank=2)).data
    two = lora_delta(x, LoraAdapter(A, B, alpha=6.0, rank=2)).data
    assert np.array_equal(two, 2.0 * one)


def test_lora_apply_adds_scaled_low_rank_update():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(5, 6)))
    W = Tensor(rng.normal(size=(4, 6)))
    A, B = rng.normal(size=(2, 6)), rng.normal(size=(4, 2))
    out = lora_apply(x, W, LoraAdapter(Tensor(A), Tensor(B), alpha=8.0, rank=2)).data
    expected = x.data @ W.data.T + 4.0 * (x.data @ A.T @ B.T)
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_lora_apply_shape_errors():
    rng = np.random.default_rng(3)
    W = Tensor(rng.normal(size=(4, 6)))
    adapter = LoraAdapter(Tensor(np.zeros((2, 6))), Tensor(np.zeros((4, 2))), alpha=1.0, rank=2)
    with pytest.raises(DimensionError):
        lora_apply(Tensor(np.ones((3, 5))), W, adapter)
    bad = LoraAdapter(Tensor(np.zeros((3, 6))), Tensor(np.zeros((4, 2))), alpha=1.0, rank=2)
    with pytest.raises(DimensionError):
        lora_apply(Tensor(np.ones((3, 6))), W, bad)


def test_initial_loss_is_near_uniform():
    vocab_size = 64
    model = small_model(vocab_size=vocab_size, d_model=16, max_seq_len=32)
    rng = np.random.default_rng(4)
    inputs = Tensor(rng.normal(size=(20, 16)))
    targets = [int(t) for t in rng.integers(0, vocab_size, size=20)]
    loss = softmax_cross_entropy_ignore(model.forward(inputs), targets).item()
    assert abs(loss - math.log(vocab_size)) < 0.05 * math.log(vocab_size)


def test_full_model_gradients_match_finite_differences():
    model = small_model()
    rng = np.random.default_rng(5)
    for target in ("q", "v"):
        for layer in range(SMALL.n_layers):
            model.params[f"lora.{layer}.{target}.B"].data = rng.normal(0.0, 0.1, size=(SMALL.d_model, SMALL.lora_rank))
    for tensor in model.params.values():
        tensor.requires_grad = True
        tensor.grad = None

    seq = sample_sequence(rng)
    h = Tensor(rng.normal(size=(K, SMALL.d_audio)))
    active_tape().clear()
    backward(model_loss(model, seq, h))

    names = ["tok_embed", "layers.0.wq", "layers.1.w1", "lora.0.q.A", "lora.1.v.B", "projection.weight"]
    checked = 0
    for name in names:
        tensor = model.params[name]
        coords = rng.choice(tensor.data.size, size=4, replace=False)
        numeric = numeric_gradient(lambda: model_loss(model, seq, h), tensor, coords=coords)
        for c in coords:
            analytic = tensor.grad.reshape(-1)[c]
            approx = numeric.reshape(-1)[c]
            denom = max(abs(analytic), abs(approx), 1e-4)
            assert abs(analytic - approx) / denom < 1e-3, name
            checked += 1
    assert checked >= 20


def test_set_trainable_groups():
    model = small_model()
    groups = model.parameter_groups()
    assert set(groups) == {"backbone", "adapter", "projection"}
    assert all(model.params[n].requires_grad for n in groups["adapter"])
    assert not any(model.params[n].requires_grad for n in groups["backbone"])

    model.set_trainable(train_backbone=True, train_projection=False)
    assert all(model.params[n].requires_grad for n in groups["backbone"])
    assert not any(model.params[n].requires_grad for n in groups["adapter"] + groups["projection"])


def test_checkpoint_round_trip_gives_identical_logits(tmp_path):
    rng = np.random.default_rng(6)
    model = small_model()
    model.params["lora.0.v.B"].data = rng.normal(size=(SMALL.d_model, SMALL.lora_rank))
    path = model.save_checkpoint(tmp_path / "m.ilkm", {"step": 7})
    loaded, block = ToyDecoder.load_checkpoint(path)

    assert block["step"] == 7
    assert loaded.cfg == model.cfg
    inputs = Tensor(rng.normal(size=(6, SMALL.d_model)))
    assert np.array_equal(loaded.forward(inputs).data, model.forward(inputs).data)

    again = loaded.save_checkpoint(tmp_path / "again.ilkm", {"step": 7})
    assert path.read_bytes() == again.read_bytes()


def test_load_state_dict_rejects_wrong_shapes():
    model = small_model()
    state = model.state_dict()
    state["lm_head"] = np.zeros((3, 3))
    with pytest.raises(DimensionError):
        model.load_state_dict(state)
    del state["lm_head"]
    with pytest.raises(DimensionError):
        model.load_state_dict(state)


def test_forward_rejects_long_or_wrong_width_inputs():
    model = small_model()
    with pytest.raises(SeqLenError):
        model.forward(Tensor(np.zeros((SMALL.max_seq_len + 1, SMALL.d_model))))
    with pytest.raises(DimensionError):
        model.forward(Tensor(np.zeros((4, SMALL.d_model + 1))))


def test_padding_does_not_change_real_positions():
    model = small_model()
    rng = np.random.default_rng(7)
    real = rng.normal(size=(5, SMALL.d_model))
    padded = np.vstack([real, rng.normal(size=(3, SMALL.d_model))])
    short = model.forward(Tensor(real)).data
    long = model.forward(Tensor(padded), valid_len=5).data[:5]
    np.testing.assert_allclose(long, short, rtol=0, atol=1e-12)


def test_later_rows_never_change_earlier_logits():
    model = small_model()
    rng = np.random.default_rng(5)
    inputs = rng.normal(size=(6, SMALL.d_model))
    base = model.forward(Tensor(inputs)).data
    for n in range(1, 6):
        changed = inputs.copy()
        changed[n] += rng.normal(size=SMALL.d_model)
        out = model.forward(Tensor(changed)).data
        assert np.array_equal(out[:n], base[:n]), n
        assert not np.array_equal(out[n], base[n])


def test_single_position_gives_one_row_of_finite_logits():
    model = small_model()
    logits = model.forward(Tensor(np.ones((1, SMALL.d_model)))).data
    assert logits.shape == (1, SMALL.vocab_size)
    assert np.all(np.isfinite(logits))


def test_zero_new_tokens_generates_nothing():
    vocab = build_vocab(["yes no it is a car dog rain"], max_size=12)
    model = small_model()
    seq = SequenceBuilder(3, K, bos_id=0).build_interleaved([3, 5, 6], [])
    block = model.project_audio(Tensor(np.zeros((K, SMALL.d_audio))))
    assert model.generate(seq, block, vocab, max_new=0) == ""
    assert model.generate_ids(seq, block, eos_id=1, max_new=0) == []


def test_greedy_generation_is_deterministic():
    vocab = build_vocab(["yes no it is a car dog rain"], max_size=12)
    model = small_model()
    rng = np.random.default_rng(8)
    seq = SequenceBuilder(3, K, bos_id=0).build_interleaved([3, 5, 6], [])
    block = model.project_audio(Tensor(rng.normal(size=(K, SMALL.d_audio))))

    first = model.generate(seq, block, vocab, max_new=5)
    assert first == model.generate(seq, block, vocab, max_new=5)
    assert len(active_tape()) == 0

    ids = model.generate_ids(seq, block, eos_id=1, max_new=5, temperature=0.9, seed=11)
    assert ids == model.generate_ids(seq, block, eos_id=1, max_new=5, temperature=0.9, seed=11)
    assert len(ids) <= 5
    assert vocab.eos_id not in ids


def test_generation_stops_at_max_seq_len():
    model = small_model(max_seq_len=K + 4)
    seq = SequenceBuilder(3, K, bos_id=0).build_interleaved([3, 5, 6], [])
    block = model.project_audio(Tensor(np.zeros((K, SMALL.d_audio))))
    ids = model.generate_ids(seq, block, eos_id=-1, max_new=50)
    assert seq.total_len + len(ids) == model.cfg.max_seq_len


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, n_heads=4).validate()
    with pytest.raises(ValueError):
        ModelConfig(lora_rank=0).validate()
    assert ModelConfig.from_dict(SMALL.to_dict()) == SMALL


def test_labels_unused_on_audio_positions_keep_loss_inert():
    model = small_model()
    rng = np.random.default_rng(9)
    seq = sample_sequence(rng)
    h = Tensor(rng.normal(size=(K, SMALL.d_audio)))
    logits = model.forward(model.embed_sequence(seq, model.project_audio(h)))
    labels = seq.labels
    assert all(labels[i] == IGNORE_INDEX for i, p in enumerate(seq.positions) if p.is_audio)
    base = softmax_cross_entropy_ignore(logits, labels).item()
    noisy = logits.data.copy()
    for i, p in enumerate(seq.positions):
        if p.is_audio:
            noisy[i] += 100.0
    assert softmax_cross_entropy_ignore(Tensor(noisy), labels).item() == base


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
