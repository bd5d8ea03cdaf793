from __future__ import annotations

import math

import numpy as np
import pytest

from src.errors import GeometryError, ShapeError, UsageError
from src.models.config import PhantomSpec
from src.services.geometry import (
    ProjectionModel,
    View,
    adjoint_constant,
    back_project,
    build_feature_volume,
    hemisphere_mask,
    make_pair,
    mlo_offset,
    mlo_rows,
    phantom_generate,
    project_point,
    project_volume,
    ray_coverage,
)
from src.services.imaging import avg_pool2d, normalize_truncation
from src.services.verification import run_geometry_checks


class TestMatrices:
    def test_projection_idempotent_and_rotation_orthonormal(self):
        model = ProjectionModel()
        np.testing.assert_allclose(model.projection @ model.projection, model.projection)
        np.testing.assert_allclose(model.rotation.T @ model.rotation, np.eye(3), atol=1e-12)
        assert np.linalg.det(model.rotation) == pytest.approx(1.0)

    def test_point_projection_closed_forms(self, rng):
        points = rng.uniform(-10, 10, size=(1000, 3))
        x, y, z = points.T
        cc = project_point(points, View.CC)
        mlo = project_point(points, View.MLO)
        np.testing.assert_allclose(cc, np.stack([x, y, np.zeros_like(x)], axis=-1), atol=1e-6)
        np.testing.assert_allclose(mlo, np.stack([x, (y - z) / math.sqrt(2), np.zeros_like(x)], axis=-1), atol=1e-6)

    def test_spot_values(self):
        np.testing.assert_allclose(project_point([1, 2, 3], View.CC), [1, 2, 0])
        np.testing.assert_allclose(project_point([1, 2, 3], View.MLO), [1, -0.70711, 0], atol=1e-5)
        np.testing.assert_allclose(project_point([0, 0, 5], View.CC), [0, 0, 0])

    def test_point_shape_checked(self):
        with pytest.raises(ShapeError):
            project_point([1.0, 2.0], View.CC)


class TestProjection:
    @pytest.mark.parametrize("view", list(View))
    def test_round_trip_scales_by_ray_coverage(self, rng, view):
        coverage = ray_coverage(view, 12, 12)[:, None]
        for _ in range(20):
            image = rng.standard_normal((12, 12)).astype(np.float32)
            restored = project_volume(back_project(image, view, 12), view)
            np.testing.assert_allclose(restored, image * coverage, atol=1e-5)

    @pytest.mark.parametrize("depth", [4, 6, 12])
    def test_round_trip_exact_on_full_rays(self, rng, depth):
        full = ray_coverage(View.MLO, depth, 12) == 1.0
        assert full.any()
        image = rng.standard_normal((12, 12)).astype(np.float32)
        restored = project_volume(back_project(image, View.MLO, depth), View.MLO)
        np.testing.assert_allclose(restored[full], image[full], atol=1e-5)
        np.testing.assert_allclose(project_volume(back_project(image, View.CC, depth), View.CC), image, atol=1e-5)

    def test_mlo_coverage_hand_values(self):
        # D = H = 4, linhas r recebem y = r + z - 2 para z em 0..3
        np.testing.assert_allclose(ray_coverage(View.MLO, 4, 4), [0.5, 0.75, 1.0, 0.75])

    @pytest.mark.parametrize("view", list(View))
    def test_adjoint_identity(self, rng, view):
        depth = 10
        volume = rng.standard_normal((depth, 10, 10))
        image = rng.standard_normal((10, 10))
        lhs = np.sum(project_volume(volume, view) * image)
        rhs = adjoint_constant(depth) * np.sum(volume * back_project(image, view, depth))
        assert lhs == pytest.approx(rhs, abs=1e-4)

    def test_cc_projection_is_depth_mean(self, rng):
        volume = rng.random((4, 6, 6))
        np.testing.assert_allclose(project_volume(volume, View.CC), volume.mean(axis=0))

    def test_mlo_row_follows_shear(self):
        volume = np.zeros((8, 8, 8))
        volume[5, 2, 3] = 1.0
        image = project_volume(volume, View.MLO)
        # linha y - z + D // 2 = 2 - 5 + 4 = 1
        assert image[1, 3] == pytest.approx(1.0 / 8)
        assert np.count_nonzero(image) == 1

    def test_mlo_rows_match_point_projection(self):
        depth = height = 16
        z, y = np.meshgrid(np.arange(depth), np.arange(height), indexing="ij")
        points = np.stack([np.zeros(z.size), y.ravel(), z.ravel()], axis=-1).astype(np.float64)
        u = project_point(points, View.MLO)[:, 1].reshape(depth, height)
        np.testing.assert_allclose(mlo_rows(depth, height), np.sqrt(2.0) * u + mlo_offset(depth), atol=1e-9)

    def test_adjacent_voxels_stay_adjacent(self):
        volume = np.zeros((16, 16, 16))
        volume[0, 7, 4] = 1.0
        volume[0, 6, 4] = 2.0
        volume[0, 8, 4] = 5.0
        image = project_volume(volume, View.MLO)
        rows = np.nonzero(image[:, 4])[0]
        assert list(rows) == [14, 15]
        assert image[:, 4].sum() == pytest.approx(3.0 / 16)

    def test_mlo_back_projection_stays_on_its_ray(self):
        image = np.zeros((16, 16))
        image[0, 5] = 1.0
        volume = back_project(image, View.MLO, 16)
        z, y = np.nonzero(volume[:, :, 5])
        np.testing.assert_array_equal(y - z, np.full(z.shape, -8))
        assert list(z) == list(range(8, 16))
        assert y.max() - y.min() <= 8
        assert np.count_nonzero(volume[:, :, [c for c in range(16) if c != 5]]) == 0

    def test_batched_back_projection(self, rng):
        images = rng.random((3, 2, 6, 6))
        volumes = back_project(images, View.MLO, 6)
        assert volumes.shape == (3, 2, 6, 6, 6)
        coverage = ray_coverage(View.MLO, 6, 6)[:, None]
        np.testing.assert_allclose(project_volume(volumes, View.MLO), images * coverage)

    def test_invalid_depth(self):
        with pytest.raises(GeometryError):
            back_project(np.ones((4, 4)), View.CC, 0)

    def test_feature_volume_layout(self, rng):
        lat_cc = rng.random((2, 1, 4, 4)).astype(np.float32)
        lat_mlo = rng.random((2, 1, 4, 4)).astype(np.float32)
        volume = build_feature_volume(lat_cc, lat_mlo)
        assert volume.shape == (2, 2, 4, 4, 4)
        assert volume.dtype == np.float32
        np.testing.assert_allclose(volume[:, 0, 2], lat_cc[:, 0])
        coverage = ray_coverage(View.MLO, 4, 4)[:, None]
        np.testing.assert_allclose(project_volume(volume[:, 1], View.MLO), lat_mlo[:, 0] * coverage, atol=1e-6)

    def test_feature_volume_shape_mismatch(self):
        with pytest.raises(ShapeError):
            build_feature_volume(np.ones((1, 4, 4)), np.ones((1, 4, 5)))


class TestPhantom:
    def test_deterministic(self):
        spec = PhantomSpec(grid_size=16, radius=5.5, seed=3)
        np.testing.assert_array_equal(phantom_generate(spec), phantom_generate(spec))

    def test_support_inside_hemisphere(self):
        spec = PhantomSpec(grid_size=16, radius=5.5, seed=1)
        volume = phantom_generate(spec)
        mask = hemisphere_mask(16, 5.5)
        assert np.all(volume[~mask] == 0)
        assert np.all(volume[mask] >= spec.base_intensity - 1e-6)

    def test_hemisphere_voxel_count(self):
        count = hemisphere_mask(48, 16.0).sum()
        expected = 2.0 / 3.0 * math.pi * 16.0**3
        assert abs(count - expected) / expected < 0.05

    def test_radius_larger_than_grid(self):
        with pytest.raises(GeometryError):
            phantom_generate(PhantomSpec(grid_size=8, radius=9.0))

    def test_radius_past_mlo_margin_warns(self, caplog):
        with caplog.at_level("WARNING"):
            phantom_generate(PhantomSpec(grid_size=8, radius=3.5, blob_count=0))
        assert "outside" in caplog.text

    def test_pair_is_normalized(self):
        pair = make_pair(phantom_generate(PhantomSpec(grid_size=16, radius=5.5, seed=2)), sample_id=7, seed=2)
        for image in (pair.cc, pair.mlo):
            assert image.dtype == np.float32
            assert image.min() >= 0.0 and image.max() <= 1.0
            assert image.max() == pytest.approx(1.0)
        assert pair.sample_id == 7


class TestImaging:
    def test_normalize_hand_percentiles(self):
        image = np.array([[0, 10, 20], [30, 40, 0]], dtype=np.float64)
        out = normalize_truncation(image, 25, 75)
        assert out[0, 2] == pytest.approx((20 - 17.5) / 15, abs=1e-4)
        assert out[0, 0] == 0.0 and out[1, 2] == 0.0
        assert out[0, 1] == 0.0 and out[1, 1] == 1.0

    def test_normalize_all_zero_passthrough(self):
        np.testing.assert_array_equal(normalize_truncation(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_normalize_idempotent_with_mask(self, rng):
        image = rng.random((8, 8)) + 0.1
        once = normalize_truncation(image, 0, 100)
        twice = normalize_truncation(once, 0, 100, mask=np.ones_like(image, dtype=bool))
        np.testing.assert_allclose(once, twice, atol=1e-6)

    def test_normalize_rejects_bad_range(self):
        with pytest.raises(UsageError):
            normalize_truncation(np.ones((2, 2)), 60, 40)

    def test_avg_pool(self):
        image = np.arange(16, dtype=np.float64).reshape(4, 4)
        np.testing.assert_allclose(avg_pool2d(image, 2), [[2.5, 4.5], [10.5, 12.5]])


class TestGeometryOracles:
    def test_fresh_suite_passes(self):
        results = run_geometry_checks(seed=0)
        assert all(result.passed for result in results), [r.render() for r in results if not r.passed]
        assert any(result.name == "column_bias_delta5_sigma5" for result in results)

    def test_perturbed_theta_fails_projection_values_only(self):
        results = {r.name: r for r in run_geometry_checks(seed=0, model=ProjectionModel(theta=math.pi / 4 + 0.05))}
        assert results["rotation_orthonormal"].passed
        assert results["rotation_determinant"].passed
        assert not results["mlo_point_projection"].passed
        assert not results["mlo_spot_value"].passed
        assert results["cc_point_projection"].passed
