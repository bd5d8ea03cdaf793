from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, UsageError
from ..models.records import MetricReport, SampleMetrics
from .container import atomic_write_bytes

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("psnr", a.shape, b.shape)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(data_range**2 / mse)))


@lru_cache(maxsize=8)
def gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    profile = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(profile, profile)
    window /= window.sum()
    window.setflags(write=False)
    return window


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = SSIM_WINDOW,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
    sigma: float = SSIM_SIGMA,
    data_range: float = 1.0,
) -> float:
    """SSIM médio sobre todas as janelas gaussianas válidas (sem preenchimento)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError("ssim", a.shape, b.shape)
    if window < 1 or window % 2 == 0 or window > min(a.shape):
        raise UsageError(f"ssim: window must be odd and <= {min(a.shape)}, got {window}")
    kernel = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def local_mean(image: np.ndarray) -> np.ndarray:
        return np.tensordot(sliding_window_view(image, (window, window)), kernel, axes=([2, 3], [0, 1]))

    mu_a = local_mean(a)
    mu_b = local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.clip(np.mean(numerator / denominator), -1.0, 1.0))


def score_samples(
    direction: str,
    sample_ids: Sequence[Union[int, str]],
    predictions: Iterable[np.ndarray],
    targets: Iterable[np.ndarray],
) -> MetricReport:
    samples = [
        SampleMetrics(sample_id=f"{direction}/{sample_id}", psnr=psnr(pred, target), ssim=ssim(pred, target))
        for sample_id, pred, target in zip(sample_ids, predictions, targets)
    ]
    return MetricReport(direction=direction, samples=samples)


def render_report(reports: Sequence[MetricReport]) -> str:
    """Uma linha ``id<TAB>psnr<TAB>ssim`` por amostra e, por direção, as linhas MEAN e STD."""
    lines = []
    for report in reports:
        for sample in report.samples:
            lines.append(f"{sample.sample_id}\t{sample.psnr:.6f}\t{sample.ssim:.6f}")
        lines.append(f"MEAN\t{report.psnr_mean:.6f}\t{report.ssim_mean:.6f}")
        lines.append(f"STD\t{report.psnr_std:.6f}\t{report.ssim_std:.6f}")
    return "\n".join(lines) + "\n"


def write_report(path: Union[str, Path], reports: Sequence[MetricReport]) -> None:
    atomic_write_bytes(path, render_report(reports).encode("utf-8"))
    for report in reports:
        logger.info(
            "📊 %s: PSNR %.3f ± %.3f dB, SSIM %.4f ± %.4f over %d samples",
            report.direction,
            report.psnr_mean,
            report.psnr_std,
            report.ssim_mean,
            report.ssim_std,
            report.count,
        )
