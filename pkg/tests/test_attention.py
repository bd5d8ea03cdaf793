from __future__ import annotations

import math

import numpy as np
import pytest

from src.engine import functional as F
from src.engine.gradcheck import check_gradients
from src.engine.optim import AdamW
from src.engine.tensor import Tensor
from src.errors import ShapeError, UsageError
from src.models.config import CACAConfig
from src.networks.attention import (
    CACABlock,
    CrossAttentionWeights,
    Inject3D,
    biased_cross_attention,
    caca,
    caca_weights,
    column_bias,
    grid_to_tokens,
    inject_3d,
    merge_heads,
    split_heads,
    standard_cross_attention,
    tokens_to_grid,
)


class TestColumnBias:
    def test_closed_form(self):
        bias = column_bias(1, 6, 5.0)
        assert bias[0, 0] == 0.0
        assert bias[0, 5] == pytest.approx(-0.5, abs=1e-7)

    def test_symmetric_non_positive_zero_diagonal(self):
        bias = column_bias(3, 4, 2.0)
        assert bias.shape == (12, 12)
        np.testing.assert_array_equal(bias, bias.T)
        assert (bias <= 0).all()
        assert (np.diag(bias) == 0).all()

    def test_same_column_across_rows(self):
        bias = column_bias(3, 4, 2.0)
        # tokens 1 e 9 ficam na coluna 1
        assert bias[1, 9] == 0.0

    def test_cached_and_read_only(self):
        bias = column_bias(2, 3, 5.0)
        assert column_bias(2, 3, 5.0) is bias
        with pytest.raises(ValueError):
            bias[0, 0] = 1.0

    def test_infinite_sigma_is_zero(self):
        assert not column_bias(2, 3, math.inf).any()

    def test_rejects_non_positive_sigma(self):
        with pytest.raises(UsageError):
            column_bias(2, 2, 0.0)


class TestTokens:
    def test_grid_token_round_trip(self, rng):
        x = Tensor(rng.standard_normal((2, 4, 3, 5)))
        tokens = grid_to_tokens(x)
        assert tokens.shape == (2, 15, 4)
        np.testing.assert_array_equal(tokens.data[:, 7], x.data[:, :, 1, 2])
        np.testing.assert_array_equal(tokens_to_grid(tokens, 3, 5).data, x.data)

    def test_heads_round_trip(self, rng):
        tokens = Tensor(rng.standard_normal((2, 6, 8)))
        heads = split_heads(tokens, 4)
        assert heads.shape == (2, 4, 6, 2)
        np.testing.assert_array_equal(merge_heads(heads).data, tokens.data)

    def test_heads_must_divide_channels(self, rng):
        with pytest.raises(ShapeError):
            split_heads(Tensor(rng.standard_normal((1, 4, 6))), 4)


class TestCaca:
    def _inputs(self, rng, channels=8, h=3, w=4):
        f_tar = Tensor(rng.standard_normal((2, channels, h, w)))
        f_ref = Tensor(rng.standard_normal((2, channels, h, w)))
        return f_tar, f_ref

    def test_without_bias_matches_standard_attention(self, rng):
        f_tar, f_ref = self._inputs(rng)
        weights = CrossAttentionWeights(8, rng)
        config = CACAConfig(sigma=5.0, heads=2, channels=8, use_column_bias=False)
        out = caca(f_tar, f_ref, weights, config)
        q, k, v = weights.project(grid_to_tokens(f_tar), grid_to_tokens(f_ref))
        reference = standard_cross_attention(split_heads(q, 2), split_heads(k, 2), split_heads(v, 2))
        expected = tokens_to_grid(weights.to_out(merge_heads(reference)), 3, 4)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-6)

    def test_infinite_sigma_matches_standard_attention(self, rng):
        q = Tensor(rng.standard_normal((1, 6, 4)))
        k = Tensor(rng.standard_normal((1, 6, 4)))
        v = Tensor(rng.standard_normal((1, 6, 4)))
        biased = biased_cross_attention(q, k, v, column_bias(2, 3, math.inf))
        np.testing.assert_allclose(biased.data, standard_cross_attention(q, k, v).data, atol=1e-6)

    def test_tiny_sigma_confines_attention_to_column(self, rng):
        f_tar, f_ref = self._inputs(rng)
        weights = CrossAttentionWeights(8, rng)
        config = CACAConfig(sigma=0.01, heads=2, channels=8)
        attention = caca_weights(f_tar, f_ref, weights, config).data
        cols = np.arange(12) % 4
        cross = cols[:, None] != cols[None, :]
        assert attention[..., cross].reshape(2, 2, 12, -1).sum(axis=-1).max() < 1e-6

    def test_hand_two_key_case(self):
        q = Tensor(np.array([[1.0]]))
        k = Tensor(np.array([[0.0], [math.log(3.0)]]))
        v = Tensor(np.array([[1.0], [5.0]]))
        assert standard_cross_attention(q, k, v).data[0, 0] == pytest.approx(4.0, rel=1e-5)

    def test_single_key_returns_value(self, rng):
        q = Tensor(rng.standard_normal((3, 4)))
        k = Tensor(rng.standard_normal((1, 4)))
        v = Tensor(rng.standard_normal((1, 4)))
        np.testing.assert_allclose(standard_cross_attention(q, k, v).data, np.repeat(v.data, 3, axis=0), rtol=1e-6)

    def test_constant_reference_returns_value_row(self, rng):
        f_tar, _ = self._inputs(rng)
        token = rng.standard_normal(8)
        f_ref = Tensor(np.broadcast_to(token[None, :, None, None], (2, 8, 3, 4)).copy())
        weights = CrossAttentionWeights(8, rng)
        config = CACAConfig(sigma=1.0, heads=2, channels=8)
        out = caca(f_tar, f_ref, weights, config).data
        value_row = weights.to_out(weights.to_v(Tensor(token[None].astype(np.float32)))).data[0]
        np.testing.assert_allclose(out, np.broadcast_to(value_row[None, :, None, None], out.shape), atol=1e-5)

    def test_deviation_from_unbiased_shrinks_with_sigma(self, rng):
        f_tar, f_ref = self._inputs(rng)
        weights = CrossAttentionWeights(8, rng)
        unbiased = caca_weights(
            f_tar, f_ref, weights, CACAConfig(heads=2, channels=8, use_column_bias=False)
        ).data
        deviations = [
            np.abs(caca_weights(f_tar, f_ref, weights, CACAConfig(sigma=sigma, heads=2, channels=8)).data - unbiased).max()
            for sigma in (0.5, 1.0, 5.0, 50.0)
        ]
        assert all(later <= earlier for earlier, later in zip(deviations, deviations[1:]))
        assert deviations[-1] < deviations[0]

    def test_shape_mismatch(self, rng):
        weights = CrossAttentionWeights(8, rng)
        config = CACAConfig(heads=2, channels=8)
        with pytest.raises(ShapeError):
            caca(Tensor(np.zeros((1, 8, 3, 4))), Tensor(np.zeros((1, 8, 4, 4))), weights, config)

    def test_block_gradients(self, rng):
        f_tar, f_ref = self._inputs(rng, channels=4, h=2, w=3)
        f_tar.requires_grad = True
        f_ref.requires_grad = True
        block = CACABlock(4, 2, CACAConfig(sigma=1.0, heads=2, channels=4), rng)
        w = rng.standard_normal((2, 4, 2, 3))
        error = check_gradients(lambda: F.sum(F.mul(block(f_tar, f_ref), w)), [f_tar, f_ref], h=1e-4)
        assert error < 1e-3


class TestInject3D:
    def test_identity_at_initialization(self, rng):
        module = Inject3D(4, 2, 2, rng)
        f_caca = Tensor(rng.standard_normal((2, 4, 4, 4)))
        f_3d = Tensor(rng.standard_normal((2, 4, 4, 4, 4)))
        np.testing.assert_array_equal(inject_3d(f_caca, f_3d, module).data, f_caca.data)

    def test_zero_volume_is_identity(self, rng):
        module = Inject3D(4, 2, 2, rng)
        f_caca = Tensor(rng.standard_normal((1, 4, 4, 4)))
        module.zero_conv.weight.data = rng.standard_normal(module.zero_conv.weight.shape).astype(np.float32)
        out = inject_3d(f_caca, Tensor(np.zeros((1, 4, 4, 4, 4))), module)
        np.testing.assert_allclose(out.data, f_caca.data, atol=1e-6)

    def test_gate_opens_after_one_step(self, rng):
        module = Inject3D(4, 2, 2, rng)
        f_caca = Tensor(rng.standard_normal((1, 4, 4, 4)))
        f_3d = Tensor(rng.standard_normal((1, 4, 4, 4, 4)))
        target = rng.standard_normal((1, 4, 4, 4))
        optimizer = AdamW(module.named_parameters(), lr=1e-2)
        optimizer.zero_grad()
        F.mse_loss(inject_3d(f_caca, f_3d, module), target).backward()
        optimizer.step()
        assert np.abs(module.zero_conv.weight.data).max() > 0

    def test_volume_shape_checked(self, rng):
        module = Inject3D(4, 2, 2, rng)
        with pytest.raises(ShapeError):
            module(Tensor(np.zeros((1, 4, 4, 4))), Tensor(np.zeros((1, 4, 4, 4, 3))))
