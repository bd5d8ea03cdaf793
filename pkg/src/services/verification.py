"""Bateria de oráculos da geometria (matrizes, projeções, adjunção, correlação de colunas)."""

from __future__ import annotations

import logging
import math
from typing import Callable, List

import numpy as np

from ..engine.rng import derive_seed, make_rng
from ..models.records import CheckResult
from ..networks.attention import column_bias
from .dataset import phantom_spec_for
from .geometry import (
    DEFAULT_MODEL,
    ProjectionModel,
    View,
    adjoint_constant,
    back_project,
    hemisphere_mask,
    make_pair,
    phantom_generate,
    project_point,
    project_volume,
    ray_coverage,
)

logger = logging.getLogger(__name__)

POINT_COUNT = 1000
ROUND_TRIP_IMAGES = 20
CORRELATION_PHANTOMS = 50


def _check(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def check_matrices(model: ProjectionModel) -> List[CheckResult]:
    p, r = model.projection, model.rotation
    idempotent = float(np.abs(p @ p - p).max())
    orthonormal = float(np.abs(r.T @ r - np.eye(3)).max())
    det = float(np.linalg.det(r))
    return [
        _check("projection_idempotent", idempotent < 1e-6, f"max|PP-P|={idempotent:.2e}"),
        _check("rotation_orthonormal", orthonormal < 1e-6, f"max|RtR-I|={orthonormal:.2e}"),
        _check("rotation_determinant", abs(det - 1.0) < 1e-6, f"det(R)={det:.9f}"),
    ]


def check_point_projection(model: ProjectionModel, rng: np.random.Generator) -> List[CheckResult]:
    points = rng.uniform(-50.0, 50.0, size=(POINT_COUNT, 3))
    x, y, z = points.T
    zeros = np.zeros_like(x)
    expected_cc = np.stack([x, y, zeros], axis=-1)
    expected_mlo = np.stack([x, (y - z) / math.sqrt(2.0), zeros], axis=-1)
    reference = ProjectionModel()
    canonical_mlo = points @ (reference.projection @ reference.rotation).T

    cc_err = float(np.abs(project_point(points, View.CC, model) - expected_cc).max())
    mlo = project_point(points, View.MLO, model)
    mlo_err = max(float(np.abs(mlo - expected_mlo).max()), float(np.abs(mlo - canonical_mlo).max()))
    spot = project_point([1.0, 2.0, 3.0], View.MLO, model)
    spot_ok = np.allclose(spot, [1.0, -0.70711, 0.0], atol=1e-5)
    return [
        _check("cc_point_projection", cc_err < 1e-6, f"max err {cc_err:.2e} over {POINT_COUNT} points"),
        _check("mlo_point_projection", mlo_err < 1e-6, f"max err {mlo_err:.2e} over {POINT_COUNT} points"),
        _check("mlo_spot_value", spot_ok, f"(1,2,3) -> ({spot[0]:.5f}, {spot[1]:.5f}, {spot[2]:.5f})"),
    ]


def check_round_trip(rng: np.random.Generator, size: int = 16) -> List[CheckResult]:
    """P(B(i)) = i·cobertura do raio; nas linhas de raio completo, a própria imagem."""
    results = []
    for view in View:
        coverage = ray_coverage(view, size, size)[:, None]
        full = coverage[:, 0] == 1.0
        worst = 0.0
        for _ in range(ROUND_TRIP_IMAGES):
            image = rng.standard_normal((size, size)).astype(np.float32)
            restored = project_volume(back_project(image, view, size), view)
            worst = max(worst, float(np.abs(restored - image * coverage).max()))
            worst = max(worst, float(np.abs(restored[full] - image[full]).max()))
        results.append(
            _check(f"{view.value}_round_trip", worst < 1e-5, f"max err {worst:.2e}, {int(full.sum())} full rays")
        )
    return results


def check_adjoint(rng: np.random.Generator, size: int = 16) -> List[CheckResult]:
    results = []
    k = adjoint_constant(size)
    for view in View:
        volume = rng.standard_normal((size, size, size))
        image = rng.standard_normal((size, size))
        lhs = float(np.sum(project_volume(volume, view) * image))
        rhs = k * float(np.sum(volume * back_project(image, view, size)))
        gap = abs(lhs - rhs)
        results.append(_check(f"{view.value}_adjoint", gap < 1e-4, f"|<Pv,i> - k<v,Bi>|={gap:.2e}, k=1/{size}"))
    return results


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def check_column_correspondence(seed: int, grid_size: int = 24) -> CheckResult:
    spec = phantom_spec_for(grid_size)
    cc_profiles, mlo_profiles = [], []
    for index in range(CORRELATION_PHANTOMS):
        pair_seed = derive_seed(seed, index)
        pair = make_pair(phantom_generate(spec.model_copy(update={"seed": pair_seed})), index, pair_seed)
        cc_profiles.append(pair.cc.sum(axis=0))
        mlo_profiles.append(pair.mlo.sum(axis=0))
    shuffled = make_rng(seed).permutation(CORRELATION_PHANTOMS)
    # desloca a permutação para nunca parear um fantoma consigo mesmo
    shuffled = np.where(shuffled == np.arange(CORRELATION_PHANTOMS), (shuffled + 1) % CORRELATION_PHANTOMS, shuffled)
    paired = np.mean([_correlation(c, m) for c, m in zip(cc_profiles, mlo_profiles)])
    unpaired = np.mean([_correlation(cc_profiles[i], mlo_profiles[j]) for i, j in enumerate(shuffled)])
    return _check(
        "column_correspondence",
        paired > unpaired,
        f"paired corr {paired:.4f} vs shuffled {unpaired:.4f} over {CORRELATION_PHANTOMS} phantoms",
    )


def check_hemisphere_volume() -> CheckResult:
    radius, grid = 16.0, 48
    count = int(hemisphere_mask(grid, radius).sum())
    expected = 2.0 / 3.0 * math.pi * radius**3
    error = abs(count - expected) / expected
    return _check("hemisphere_volume", error < 0.05, f"{count} voxels vs {expected:.1f} ({error:.2%})")


def check_column_bias() -> List[CheckResult]:
    bias = column_bias(1, 6, 5.0)
    spot = float(bias[0, 5])
    same = column_bias(2, 3, 5.0)
    return [
        _check("column_bias_delta5_sigma5", abs(spot + 0.5) < 1e-7, f"bias(Δ=5, σ=5)={spot:.8f}"),
        _check("column_bias_same_column", same[0, 3] == 0.0, f"bias(Δ=0)={float(same[0, 3])}"),
        _check(
            "column_bias_symmetric_nonpositive",
            bool(np.array_equal(same, same.T) and (same <= 0).all()),
            "symmetric and <= 0",
        ),
    ]


def run_geometry_checks(seed: int = 0, model: ProjectionModel = DEFAULT_MODEL) -> List[CheckResult]:
    rng = make_rng(seed)
    steps: List[Callable[[], object]] = [
        lambda: check_matrices(model),
        lambda: check_point_projection(model, rng),
        lambda: check_round_trip(rng),
        lambda: check_adjoint(rng),
        lambda: check_column_correspondence(seed),
        check_hemisphere_volume,
        check_column_bias,
    ]
    results: List[CheckResult] = []
    for step in steps:
        outcome = step()
        results.extend(outcome if isinstance(outcome, list) else [outcome])
    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.warning("❌ Geometry verification failed: %s", ", ".join(failed))
    else:
        logger.info("✅ Geometry verification: %d checks passed", len(results))
    return results
