"""Tests for the toy Transformer language model."""

from dataclasses import replace

import numpy as np
import pytest

from moa_ffn.base import ConfigError, DataError
from moa_ffn.ffn import FFNConfig, FFNVariant
from moa_ffn.tensor import backward
from moa_ffn.transformer import (
    ModelConfig,
    build,
    forward_loss,
    generate_greedy,
    load_model,
    parameter_breakdown,
    save_model,
    sequence_losses,
)


def _tokens(rng, batch=2, length=9):
    return rng.integers(0, 256, size=(batch, length))


class TestModelConfig:
    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=16, n_head=3)

    def test_head_dim_must_be_even(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=12, n_head=4)

    def test_ffn_width_must_match(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=16, n_head=2, ffn=FFNConfig(8))

    def test_default_ffn(self):
        assert ModelConfig(d_model=16, n_head=2).ffn.variant is FFNVariant.BASELINE_II


class TestBuild:
    def test_deterministic(self, tiny_model_config):
        a = build(tiny_model_config, seed=1).state_dict()
        b = build(tiny_model_config, seed=1).state_dict()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_ffn_swap_leaves_attention_weights(self, tiny_model_config):
        other = replace(tiny_model_config, ffn=FFNConfig(16, FFNVariant.BI_MOA))
        a = build(tiny_model_config, seed=2).state_dict()
        b = build(other, seed=2).state_dict()
        for name in ("tok_emb", "layers.0.wq", "layers.0.wo"):
            np.testing.assert_array_equal(a[name], b[name])

    def test_parameter_breakdown(self, tiny_model_config):
        model = build(tiny_model_config)
        counts = parameter_breakdown(model)
        assert counts["embedding"] == 256 * 16
        assert counts["attention"] == 4 * 16 * 16
        assert counts["norm"] == 3 * 16
        assert counts["ffn"] == 3 * 16 * 42
        assert counts["total"] == model.param_count

    def test_untied_head(self, tiny_model_config):
        model = build(replace(tiny_model_config, tie_embeddings=False))
        assert parameter_breakdown(model)["embedding"] == 2 * 256 * 16


class TestForward:
    def test_initial_loss_is_near_uniform(self, tiny_model_config, rng):
        loss = forward_loss(build(tiny_model_config), _tokens(rng)).item()
        assert loss == pytest.approx(np.log(256.0), abs=0.05)

    def test_sequence_losses_average_to_loss(self, tiny_model_config, rng):
        model = build(tiny_model_config)
        tokens = _tokens(rng)
        per_sequence = sequence_losses(model, tokens)
        assert per_sequence.shape == (2,)
        assert per_sequence.mean() == pytest.approx(forward_loss(model, tokens).item())

    def test_causal(self, tiny_model_config, rng):
        model = build(tiny_model_config)
        tokens = _tokens(rng, batch=1, length=8)
        changed = tokens.copy()
        changed[0, -1] = (changed[0, -1] + 1) % 256
        a = model.logits(tokens).data
        b = model.logits(changed).data
        np.testing.assert_allclose(a[0, :-1], b[0, :-1])
        assert not np.allclose(a[0, -1], b[0, -1])

    def test_token_out_of_vocabulary(self, tiny_model_config):
        with pytest.raises(DataError):
            forward_loss(build(tiny_model_config), np.array([[1, 2, 300]]))

    def test_sequence_too_long(self, tiny_model_config, rng):
        with pytest.raises(DataError):
            build(tiny_model_config).logits(_tokens(rng, length=9))

    @pytest.mark.parametrize(
        "name", ["layers.0.wq", "layers.0.ffn.W1", "tok_emb", "layers.0.ffn_norm"]
    )
    def test_loss_gradient_matches_differences(self, tiny_model_config, rng, name):
        model = build(replace(tiny_model_config, ffn=FFNConfig(16, FFNVariant.ONE_MOA)))
        tokens = _tokens(rng)
        params = dict(model.named_parameters())
        backward(forward_loss(model, tokens))
        tensor = params[name]
        index = tuple(rng.integers(0, n) for n in tensor.shape)
        if name == "tok_emb":
            index = (int(tokens[0, 0]), index[1])
        step = 1e-5
        original = tensor.data[index]
        tensor.data[index] = original + step
        up = forward_loss(model, tokens).item()
        tensor.data[index] = original - step
        down = forward_loss(model, tokens).item()
        tensor.data[index] = original
        assert tensor.grad[index] == pytest.approx((up - down) / (2 * step), abs=1e-7)


class TestPersistence:
    def test_save_and_load(self, tiny_model_config, tmp_path, rng):
        config = replace(tiny_model_config, ffn=FFNConfig(16, FFNVariant.QD_LA))
        model = build(config, seed=4)
        path = save_model(model, tmp_path / "model.ckpt")
        restored = load_model(path)
        assert restored.config.ffn.variant is FFNVariant.QD_LA
        tokens = _tokens(rng, length=8)
        np.testing.assert_array_equal(model.logits(tokens).data, restored.logits(tokens).data)

    def test_greedy_generation(self, tiny_model_config):
        model = build(tiny_model_config)
        out = generate_greedy(model, [104, 105], n_new=10)
        assert len(out) == 12
        assert out[:2] == [104, 105]
        assert out == generate_greedy(model, [104, 105], n_new=10)

    def test_empty_prompt(self, tiny_model_config):
        with pytest.raises(DataError):
            generate_greedy(build(tiny_model_config), [], n_new=1)
