from __future__ import annotations

import numpy as np
import pytest

from src.engine import functional as F
from src.engine.gradcheck import check_gradients
from src.engine.tensor import Tensor
from src.errors import ShapeError
from src.networks.conditioning import NULL_DIRECTION, ConditionEmbedder, timestep_embedding
from src.networks import unet as unet_module
from src.networks.unet import Refine3D, UNet
from src.services.diffusion import cond_embedding
from src.services.imaging import avg_pool2d


def _inputs(rng, batch=2, size=8):
    z_t = rng.standard_normal((batch, 1, size, size)).astype(np.float32)
    z_ref = rng.random((batch, 1, size, size)).astype(np.float32)
    ref_t = rng.standard_normal((batch, 1, size, size)).astype(np.float32)
    return z_t, z_ref, ref_t


class TestConditioning:
    def test_timestep_embedding_layout(self):
        emb = timestep_embedding(np.array([0, 3]), 8)
        assert emb.shape == (2, 8)
        np.testing.assert_allclose(emb[0], [0, 0, 0, 0, 1, 1, 1, 1])
        assert emb[1, 0] == pytest.approx(np.sin(3.0), rel=1e-5)

    def test_null_row_replaces_direction(self, rng):
        embedder = ConditionEmbedder(8, 16, rng)
        masked = embedder(np.array([5, 5]), np.array([0, 1]), np.array([True, True])).data
        np.testing.assert_allclose(masked[0], masked[1])
        expected = embedder.time_embedding(np.array([5])).data[0] + embedder.direction.weight.data[NULL_DIRECTION]
        np.testing.assert_allclose(masked[0], expected, rtol=1e-6)

    def test_directions_differ(self, rng):
        embedder = ConditionEmbedder(8, 16, rng)
        out = embedder(np.array([5, 5]), np.array([0, 1])).data
        assert not np.allclose(out[0], out[1])

    def test_cond_embedding_null_ignores_direction(self, rng):
        embedder = ConditionEmbedder(8, 16, rng)
        emb = cond_embedding(np.array([7, 7]), np.array([0, 1]), np.array([True, True]), embedder).data
        np.testing.assert_array_equal(emb[0], emb[1])

    def test_unet_builds_condition_through_cond_embedding(self, tiny_unet_config, rng, monkeypatch):
        seen = []

        def recording(t, d, null, embedder):
            seen.append((np.array(t), np.array(d), np.array(null)))
            return cond_embedding(t, d, null, embedder)

        monkeypatch.setattr(unet_module, "cond_embedding", recording)
        z_t, z_ref, ref_t = _inputs(rng)
        UNet(tiny_unet_config)(z_t, np.array([3, 9]), np.array([1, 0]), z_ref, ref_t, null=np.array([False, True]))
        assert len(seen) == 1
        t, d, null = seen[0]
        np.testing.assert_array_equal(t, [3, 9])
        np.testing.assert_array_equal(d, [1, 0])
        np.testing.assert_array_equal(null, [False, True])


class TestRefine3D:
    def test_translation_equivariance_away_from_borders(self, rng):
        module = Refine3D(2, 4, 3, rng)
        volume = rng.standard_normal((1, 2, 8, 6, 6)).astype(np.float32)
        shifted = np.roll(volume, 1, axis=2)
        out = module(Tensor(volume)).data
        out_shifted = module(Tensor(shifted)).data
        # dois kernels 3x3x3: raio 2, longe da borda e da fatia enrolada
        np.testing.assert_allclose(out_shifted[:, :, 3:6], out[:, :, 2:5], atol=1e-5)

    def test_zero_input_gives_zero_output(self, rng):
        module = Refine3D(2, 4, 3, rng)
        out = module(Tensor(np.zeros((1, 2, 4, 4, 4), dtype=np.float32))).data
        assert out.shape == (1, 3, 4, 4, 4)
        assert not out.any()

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            Refine3D(2, 4, 3, rng)(Tensor(np.zeros((1, 3, 4, 4, 4))))


class TestUNet:
    def test_output_shape_and_determinism(self, tiny_unet_config, rng):
        z_t, z_ref, ref_t = _inputs(rng)
        first = UNet(tiny_unet_config)(z_t, np.array([3, 7]), np.array([0, 1]), z_ref, ref_t).data
        second = UNet(tiny_unet_config)(z_t, np.array([3, 7]), np.array([0, 1]), z_ref, ref_t).data
        assert first.shape == z_t.shape
        np.testing.assert_array_equal(first, second)

    def test_rejects_mismatched_resolution(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z = rng.standard_normal((1, 1, 16, 16)).astype(np.float32)
        with pytest.raises(ShapeError):
            model(z, 1, 0, z)

    def test_null_condition_ignores_reference(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z_t, z_ref, ref_t = _inputs(rng, batch=1)
        other_ref = rng.random(z_ref.shape).astype(np.float32)
        a = model(z_t, 4, 0, z_ref, ref_t, null=True).data
        b = model(z_t, 4, 0, other_ref, other_ref, null=True).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_reference_changes_conditional_output(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z_t, z_ref, ref_t = _inputs(rng, batch=1)
        a = model(z_t, 4, 0, z_ref, ref_t).data
        b = model(z_t, 4, 0, rng.random(z_ref.shape).astype(np.float32), ref_t).data
        assert not np.allclose(a, b)

    def test_volume_has_no_effect_at_initialization(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z_t, z_ref, ref_t = _inputs(rng, batch=1)
        emb = model.embedder(np.array([4]), np.array([0]))
        with_volume = model.denoise(z_t, emb, z_ref, model.refine_volumes(model.raw_volumes(z_t, ref_t, [0])))
        without = model.denoise(z_t, emb, z_ref)
        np.testing.assert_array_equal(with_volume.data, without.data)

    def test_raw_volume_roles_follow_direction(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z_t, _, ref_t = _inputs(rng)
        volume = model.raw_volumes(z_t, ref_t, np.array([0, 1]))[1]
        assert volume.shape == (2, 2, 4, 4, 4)
        np.testing.assert_allclose(volume[0, 0, 0], avg_pool2d(ref_t[0, 0], 2), rtol=1e-6)
        np.testing.assert_allclose(volume[1, 0, 0], avg_pool2d(z_t[1, 0], 2), rtol=1e-6)

    def test_reference_only_volume_zeroes_target(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        z_t, _, ref_t = _inputs(rng, batch=1)
        volume = model.raw_volumes(z_t, ref_t, np.array([0]), target_in_volume=False)[1]
        assert not volume[:, 1].any()

    def test_ablated_model_has_no_3d_modules(self, tiny_unet_config):
        full = UNet(tiny_unet_config)
        ablated = UNet(tiny_unet_config.model_copy(update={"use_im3d": False}))
        assert ablated.refiners == []
        assert all(block.inject is None for block in ablated.encoder_cross + ablated.decoder_cross)
        assert ablated.parameter_count() < full.parameter_count()

    def test_no_caca_drops_column_bias(self, tiny_unet_config):
        model = UNet(tiny_unet_config.model_copy(update={"use_caca": False}))
        assert not model.encoder_cross[0].caca.config.use_column_bias

    def test_end_to_end_gradients(self, tiny_unet_config, rng):
        model = UNet(tiny_unet_config)
        for block in model.encoder_cross + model.decoder_cross:
            gate = block.inject.zero_conv.weight
            gate.data = (0.1 * rng.standard_normal(gate.shape)).astype(np.float32)
        z_t, z_ref, ref_t = _inputs(rng)
        target = Tensor(rng.standard_normal(z_t.shape))
        t, d = np.array([3, 9]), np.array([0, 1])
        tensors = [
            model.stem.weight,
            model.encoder_cross[0].caca.attention.to_q.weight,
            model.decoder_cross[0].inject.attention.to_v.weight,
            model.refiners[0].conv1.weight,
            model.embedder.direction.weight,
            model.out_conv.weight,
        ]
        error = check_gradients(
            lambda: F.mse_loss(model(z_t, t, d, z_ref, ref_t), target),
            tensors,
            h=1e-4,
            entries=6,
            rng=rng,
        )
        assert error < 5e-3
