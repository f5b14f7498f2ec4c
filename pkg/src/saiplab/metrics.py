"""
===========
   Metrics
===========

Reconstruction metrics (PSNR, SSIM) and the sliced Wasserstein distance between
two sample sets.

SSIM here averages the local index over non-overlapping 8 x 8 windows rather
than a Gaussian-weighted sliding window, so values differ from the common
reference implementation. Comparisons are only ever made between runs of this
package.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.stats

from saiplab.constants.data_values import (
    DEFAULT_METRIC_SEED,
    DEFAULT_PEAK,
    DEFAULT_SW_PROJECTIONS,
    PSNR_CAP_DB,
    SSIM_K1,
    SSIM_K2,
    SSIM_WINDOW,
)
from saiplab.exceptions import ContractViolation
from saiplab.numerics import Rng, Signal

SampleSet = Union[Sequence[Signal], np.ndarray]


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: Optional[float] = None
    sw_distance: Optional[float] = None

    def __post_init__(self):
        if self.ssim is not None and self.ssim > 1.0 + 1e-12:
            raise ContractViolation(f"SSIM cannot exceed 1. Provided {self.ssim}.")


def _as_image(x: Union[Signal, np.ndarray]) -> np.ndarray:
    if isinstance(x, Signal):
        return x.as_image()
    return np.asarray(x, dtype=np.float64)


def _check_shapes(reference: np.ndarray, estimate: np.ndarray, context: str) -> None:
    if reference.shape != estimate.shape:
        raise ContractViolation(
            f"{context} needs equal shapes. Provided {reference.shape} and {estimate.shape}."
        )


def psnr(
    reference: Union[Signal, np.ndarray],
    estimate: Union[Signal, np.ndarray],
    peak: float = DEFAULT_PEAK,
) -> float:
    """
    ``10 log10(peak^2 / MSE)``, with identical inputs reported as 99 dB.

    :raises ContractViolation: on a shape mismatch or a nonpositive peak
    """
    reference, estimate = _as_image(reference), _as_image(estimate)
    _check_shapes(reference, estimate, "PSNR")
    if peak <= 0:
        raise ContractViolation(f"peak must be positive. Provided {peak}.")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak**2 / mse))


def _windows(image: np.ndarray, size: int) -> np.ndarray:
    rows, cols = image.shape[0] // size, image.shape[1] // size
    cropped = image[: rows * size, : cols * size]
    return cropped.reshape(rows, size, cols, size).swapaxes(1, 2).reshape(rows * cols, size * size)


def ssim(
    reference: Union[Signal, np.ndarray],
    estimate: Union[Signal, np.ndarray],
    peak: float = DEFAULT_PEAK,
    window: int = SSIM_WINDOW,
) -> float:
    """
    Mean SSIM over non-overlapping ``window x window`` tiles (trailing rows and
    columns that do not fill a tile are dropped), with ``C1 = (0.01 peak)^2`` and
    ``C2 = (0.03 peak)^2``.

    :raises ContractViolation: for images smaller than one window or mismatched shapes
    """
    reference, estimate = _as_image(reference), _as_image(estimate)
    _check_shapes(reference, estimate, "SSIM")
    if reference.ndim != 2 or min(reference.shape) < window:
        raise ContractViolation(
            f"SSIM needs images of at least {window}x{window}. Provided {reference.shape}."
        )
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    x, y = _windows(reference, window), _windows(estimate, window)
    mean_x, mean_y = x.mean(axis=1), y.mean(axis=1)
    var_x, var_y = x.var(axis=1), y.var(axis=1)
    covariance = np.mean((x - mean_x[:, None]) * (y - mean_y[:, None]), axis=1)
    local = ((2 * mean_x * mean_y + c1) * (2 * covariance + c2)) / (
        (mean_x**2 + mean_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(local))


def _as_samples(samples: SampleSet) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples.astype(np.float64))
    if len(samples) == 0:
        return np.empty((0, 0))
    return np.stack([s.data if isinstance(s, Signal) else np.asarray(s, float) for s in samples])


def sliced_wasserstein(
    a: SampleSet,
    b: SampleSet,
    projections: int = DEFAULT_SW_PROJECTIONS,
    rng: Optional[Rng] = None,
) -> float:
    """
    Average over random unit directions of the 1D Wasserstein-1 distance between
    the projected sample sets. The directions come from ``rng``, by default a
    fixed metric seed independent of any sampler seed.

    :raises ContractViolation: for empty sets or mismatched dimensions
    """
    a, b = _as_samples(a), _as_samples(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractViolation("Sliced Wasserstein needs two nonempty sample sets.")
    if a.shape[1] != b.shape[1]:
        raise ContractViolation(
            f"Sample dimensions differ: {a.shape[1]} and {b.shape[1]}."
        )
    rng = Rng(DEFAULT_METRIC_SEED) if rng is None else rng
    directions = rng.standard_normal((projections, a.shape[1]))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    projected_a, projected_b = a @ directions.T, b @ directions.T
    distances = [
        scipy.stats.wasserstein_distance(projected_a[:, i], projected_b[:, i])
        for i in range(projections)
    ]
    return float(np.mean(distances))


def evaluate(
    reference: Signal,
    estimate: Signal,
    peak: float = DEFAULT_PEAK,
    samples: Optional[SampleSet] = None,
    reference_samples: Optional[SampleSet] = None,
    projections: int = DEFAULT_SW_PROJECTIONS,
    rng: Optional[Rng] = None,
) -> MetricReport:
    """
    PSNR of ``estimate`` against ``reference``, SSIM when both are images of at
    least one window, and the sliced Wasserstein distance when both sample sets
    are given.
    """
    ssim_value = None
    if reference.is_image and min(reference.shape) >= SSIM_WINDOW:
        ssim_value = ssim(reference, estimate, peak)
    sw_value = None
    if samples is not None and reference_samples is not None:
        sw_value = sliced_wasserstein(samples, reference_samples, projections, rng)
    return MetricReport(psnr(reference, estimate, peak), ssim_value, sw_value)
