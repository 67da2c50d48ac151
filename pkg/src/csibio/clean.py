"""Outlier removal: IQR filtering over subcarriers, rolling-MAD repair over time.

The subcarrier filter drops frequency bins whose mean energy falls
outside [Q1 - 1.5*IQR, Q3 + 1.5*IQR] (single pass, closed fences, so a
constant spectrum survives untouched). The temporal filter flags
amplitude samples more than 6x the rolling-window MAD away from the
rolling median and replaces them by linear interpolation between the
nearest unflagged neighbors, preserving phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewSubcarriersRemain, WindowTooLarge
from .model import CsiMatrix

MAD_FACTOR = 6.0


def subcarrier_energy(m: CsiMatrix) -> np.ndarray:
    """Mean squared magnitude per subcarrier, E(f_k)."""
    return np.mean(np.abs(m.values) ** 2, axis=1)


def iqr_fences(energies: np.ndarray) -> tuple[float, float]:
    """[Q1 - 1.5*IQR, Q3 + 1.5*IQR] with linear-interpolation quartiles."""
    q1, q3 = np.percentile(energies, [25.0, 75.0])
    iqr = q3 - q1
    return float(q1 - 1.5 * iqr), float(q3 + 1.5 * iqr)


def iqr_subcarrier_filter(m: CsiMatrix) -> tuple[CsiMatrix, list[int]]:
    """Drop subcarriers whose mean energy lies outside the IQR fences.

    Returns the filtered matrix (freqs updated) and the removed indices
    in ascending order. Raises TooFewSubcarriersRemain if fewer than two
    subcarriers survive.
    """
    if m.n_subcarriers < 4:
        raise TooFewSubcarriersRemain(
            f"IQR filter needs K >= 4 for meaningful quartiles, got K={m.n_subcarriers}"
        )
    energies = subcarrier_energy(m)
    lo, hi = iqr_fences(energies)
    keep = (energies >= lo) & (energies <= hi)
    removed = [int(i) for i in np.flatnonzero(~keep)]
    if keep.sum() < 2:
        raise TooFewSubcarriersRemain(
            f"only {int(keep.sum())} subcarriers inside the energy fences"
        )
    if not removed:
        return m, []
    filtered = CsiMatrix(
        values=m.values[keep, :],
        freqs=m.freqs[keep],
        sample_rate_hint=m.sample_rate_hint,
        meta=m.meta,
    )
    return filtered, removed


@dataclass(frozen=True)
class MadRepairReport:
    """Outcome of one rolling-MAD pass."""

    repaired_count: int
    flags: np.ndarray  # bool [K, T], True where a sample was replaced
    untouched_subcarriers: tuple[int, ...]  # rows left as-is (all samples flagged)


def _rolling_median_mad(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered rolling median and raw MAD.

    Edge positions reuse the nearest full-width window (a shrunken
    window would lose rejection power: with two samples |x - median|
    always equals the MAD).
    """
    n = x.shape[0]
    half = window // 2
    view = np.lib.stride_tricks.sliding_window_view(x, window)
    win_med = np.median(view, axis=1)
    win_mad = np.median(np.abs(view - win_med[:, None]), axis=1)
    # Position t uses the window starting at clamp(t - half, 0, n - window).
    starts = np.clip(np.arange(n) - half, 0, n - window)
    return win_med[starts], win_mad[starts]


def _interpolate_flagged(x: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    """Replace flagged entries by interpolating between valid neighbors.

    Leading/trailing flagged runs clamp to the nearest valid value.
    """
    valid = np.flatnonzero(~flagged)
    out = x.copy()
    bad = np.flatnonzero(flagged)
    out[bad] = np.interp(bad, valid, x[valid])
    return out


def mad_temporal_repair(m: CsiMatrix, window: int = 9) -> tuple[CsiMatrix, MadRepairReport]:
    """Repair per-subcarrier amplitude spikes beyond 6x the rolling MAD.

    The MAD is raw (no consistency constant). Flagged amplitudes are
    replaced, the original phase is preserved, and unflagged entries are
    returned bit-identical. A subcarrier whose samples are all flagged is
    left untouched and reported.
    """
    if window % 2 == 0 or window < 3:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if window > m.n_samples:
        raise WindowTooLarge(f"window {window} exceeds T={m.n_samples}")

    amps = m.amplitude()
    values = np.array(m.values)
    flags = np.zeros(amps.shape, dtype=bool)
    untouched: list[int] = []

    for k in range(m.n_subcarriers):
        x = amps[k]
        med, mad = _rolling_median_mad(x, window)
        flagged = np.abs(x - med) > MAD_FACTOR * mad
        if not flagged.any():
            continue
        if flagged.all():
            untouched.append(k)
            continue
        repaired = _interpolate_flagged(x, flagged)
        idx = np.flatnonzero(flagged)
        old = x[idx]
        scale = np.where(old > 0, repaired[idx] / np.where(old > 0, old, 1.0), 0.0)
        new_vals = np.where(old > 0, values[k, idx] * scale, repaired[idx] + 0j)
        values[k, idx] = new_vals
        flags[k, idx] = True

    report = MadRepairReport(
        repaired_count=int(flags.sum()),
        flags=flags,
        untouched_subcarriers=tuple(untouched),
    )
    return m.with_values(values), report


def zscore_spectrum(m: CsiMatrix) -> np.ndarray:
    """Amplitude z-scores per subcarrier over time; zero-variance rows map to 0.

    Diagnostic view of filtering quality: clean captures stay roughly in
    [-1, 3] while spikes stand out as large |z|.
    """
    amps = m.amplitude()
    mean = amps.mean(axis=1, keepdims=True)
    std = amps.std(axis=1, keepdims=True)
    safe = np.where(std > 0, std, 1.0)
    z = (amps - mean) / safe
    return np.where(std > 0, z, 0.0)
