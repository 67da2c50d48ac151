"""Phase calibration: strip hardware phase artifacts, keep amplitudes intact.

Stages, applied per time sample along the subcarrier axis:

1. constant-offset removal (median phase subtracted, a standard CFO fix),
2. unwrapping of the +-pi principal values into a continuous profile,
3. removal of the least-squares linear trend over subcarrier index
   (absorbs SFO and packet-detection-delay slopes),
4. mean-centering.

Amplitudes pass through unchanged (to within float rounding); all
removed quantities are returned in a CalibReport so synthetic-injection
tests can check recovery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CsiMatrix

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CalibReport:
    """Per-time-sample record of everything the chain removed."""

    cfo_offset_removed: np.ndarray
    trend_slope: np.ndarray
    trend_intercept: np.ndarray
    mean_removed: np.ndarray


def median_phase(phases: np.ndarray, axis: int = 0) -> np.ndarray:
    """Median with the average-of-central-pair convention for even counts."""
    return np.median(phases, axis=axis)


def remove_cfo(m: CsiMatrix, scope: str = "per_sample") -> tuple[CsiMatrix, np.ndarray]:
    """Subtract the median phase bias, rotating each entry on the unit circle.

    ``scope='per_sample'`` uses one median per time sample (per packet);
    ``scope='global'`` uses a single median over the whole capture.
    Amplitudes are untouched. Returns the matrix and the removed offset
    per time sample. The zero-median property of the output assumes the
    phase spread at each t stays within one wrap of the median.
    """
    phases = m.phase()
    if scope == "per_sample":
        offsets = median_phase(phases, axis=0)
    elif scope == "global":
        offsets = np.full(m.n_samples, float(np.median(phases)))
    else:
        raise ValueError(f"unknown scope {scope!r}")
    rotated = m.values * np.exp(-1j * offsets)[None, :]
    return m.with_values(rotated), offsets


def unwrap_phase(phases: np.ndarray) -> np.ndarray:
    """Reconstruct a continuous phase profile from principal values.

    Consecutive differences of the output lie in (-pi, pi]; the first
    element is preserved and every element stays congruent to the input
    modulo 2*pi.
    """
    phases = np.asarray(phases, dtype=np.float64)
    d = np.diff(phases)
    wrapped = np.mod(d + np.pi, TWO_PI) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    out = np.empty_like(phases)
    out[0] = phases[0]
    np.cumsum(wrapped, out=out[1:])
    out[1:] += phases[0]
    return out


def detrend_phase(phases: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Remove the least-squares line over subcarrier index k.

    Returns (residual, slope, intercept) with residual = phase - (slope*k
    + intercept). The fit is over the integer index, not Hz; under
    uniform spacing the two differ only by an affine reparameterization.
    """
    phases = np.asarray(phases, dtype=np.float64)
    k = np.arange(phases.shape[0], dtype=np.float64)
    k_mean = k.mean()
    p_mean = phases.mean()
    denom = np.sum((k - k_mean) ** 2)
    slope = float(np.sum((k - k_mean) * (phases - p_mean)) / denom)
    intercept = float(p_mean - slope * k_mean)
    return phases - (slope * k + intercept), slope, intercept


def normalize_phase(phases: np.ndarray) -> np.ndarray:
    """Mean-center the phase profile."""
    phases = np.asarray(phases, dtype=np.float64)
    return phases - phases.mean()


def calibrate(m: CsiMatrix, cfo_scope: str = "per_sample") -> tuple[CsiMatrix, CalibReport]:
    """Run the full chain on every time sample of a CSI matrix.

    Output phases are trend-free and zero-mean along k for each t;
    amplitudes match the input to within float rounding (<= 1e-12
    relative). All columns are processed at once; the result matches the
    per-vector operations applied column by column.
    """
    rotated, offsets = remove_cfo(m, scope=cfo_scope)
    amps = rotated.amplitude()
    phases = rotated.phase()

    # Unwrap along the subcarrier axis for every column.
    d = np.diff(phases, axis=0)
    wrapped = np.mod(d + np.pi, TWO_PI) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    unwrapped = np.empty_like(phases)
    unwrapped[0] = phases[0]
    np.cumsum(wrapped, axis=0, out=unwrapped[1:])
    unwrapped[1:] += phases[0]

    # Least-squares line over subcarrier index, independently per column.
    k = np.arange(m.n_subcarriers, dtype=np.float64)
    kc = k - k.mean()
    denom = np.sum(kc**2)
    col_mean = unwrapped.mean(axis=0)
    slopes = np.sum(kc[:, None] * (unwrapped - col_mean), axis=0) / denom
    intercepts = col_mean - slopes * k.mean()
    detrended = unwrapped - (slopes[None, :] * k[:, None] + intercepts[None, :])
    means = detrended.mean(axis=0)
    out_phase = detrended - means

    calibrated = m.with_values(amps * np.exp(1j * out_phase))
    report = CalibReport(
        cfo_offset_removed=offsets,
        trend_slope=slopes,
        trend_intercept=intercepts,
        mean_removed=means,
    )
    return calibrated, report
