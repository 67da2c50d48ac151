import numpy as np
import pytest

from csibio.calib import (
    calibrate,
    detrend_phase,
    normalize_phase,
    remove_cfo,
    unwrap_phase,
)
from csibio.model import CsiMatrix
from csibio.synth import ChannelSpec, PathComponent, synthesize_matrix
from conftest import random_matrix


def _matrix_with_phase(phases, amps=None):
    phases = np.asarray(phases, dtype=float)
    if amps is None:
        amps = np.ones_like(phases)
    freqs = 5.18e9 + 312_500.0 * np.arange(phases.shape[0])
    return CsiMatrix(values=amps * np.exp(1j * phases), freqs=freqs)


class TestRemoveCfo:
    def test_constant_offset_removed(self):
        m = _matrix_with_phase(np.full((5, 3), 0.7))
        out, offsets = remove_cfo(m)
        assert np.allclose(offsets, 0.7)
        assert np.max(np.abs(out.phase())) < 1e-12

    def test_odd_k_median_subtracted(self):
        phases = np.array([[0.1], [0.2], [0.9]])
        out, offsets = remove_cfo(_matrix_with_phase(phases))
        assert offsets[0] == pytest.approx(0.2, abs=1e-15)
        assert np.allclose(out.phase()[:, 0], [-0.1, 0.0, 0.7], atol=1e-12)
        assert np.median(out.phase()[:, 0]) == pytest.approx(0.0, abs=1e-12)

    def test_amplitudes_unchanged_on_random_input(self, rng):
        m = random_matrix(rng, 9, 7)
        out, _ = remove_cfo(m)
        rel = np.abs(np.abs(out.values) - np.abs(m.values)) / np.abs(m.values)
        assert np.max(rel) < 1e-12

    def test_global_scope_single_offset(self, rng):
        m = random_matrix(rng, 5, 4)
        _, offsets = remove_cfo(m, scope="global")
        assert np.unique(offsets).size == 1


class TestUnwrap:
    def test_wrapped_ramp_reconstructed(self):
        ramp = np.array([0.0, 1.0, 2.0, 3.0 - 2 * np.pi, 4.0 - 2 * np.pi])
        assert np.allclose(unwrap_phase(ramp), [0, 1, 2, 3, 4], atol=1e-12)

    def test_identity_on_smooth_input(self):
        x = np.array([0.5, 0.5, 0.5])
        assert np.array_equal(unwrap_phase(x), x)

    def test_round_trip_recovers_smooth_phase(self, rng):
        for _ in range(20):
            k = rng.integers(8, 64)
            smooth = np.cumsum(rng.uniform(-2.5, 2.5, k))
            wrapped = np.angle(np.exp(1j * smooth))
            unwrapped = unwrap_phase(wrapped)
            # Same profile up to one global 2 pi multiple of the first element.
            shift = smooth[0] - unwrapped[0]
            assert np.max(np.abs(unwrapped + shift - smooth)) < 1e-9

    def test_postconditions(self, rng):
        x = rng.uniform(-np.pi, np.pi, 50)
        out = unwrap_phase(x)
        d = np.diff(out)
        assert np.all(d > -np.pi - 1e-12) and np.all(d <= np.pi + 1e-12)
        assert out[0] == x[0]
        assert np.allclose(np.angle(np.exp(1j * (out - x))), 0.0, atol=1e-9)


class TestDetrend:
    def test_pure_line_removed(self):
        k = np.arange(10)
        resid, slope, intercept = detrend_phase(0.3 * k + 1.0)
        assert np.max(np.abs(resid)) < 1e-12
        assert slope == pytest.approx(0.3, abs=1e-12)
        assert intercept == pytest.approx(1.0, abs=1e-12)

    def test_zero_vector(self):
        resid, slope, intercept = detrend_phase(np.zeros(6))
        assert np.array_equal(resid, np.zeros(6))
        assert slope == 0.0 and intercept == 0.0

    def test_line_plus_sine_returns_sine(self):
        k = np.arange(32, dtype=float)
        sine = 0.2 * np.sin(2 * np.pi * k / 7.0)
        # Normal-equations fit of line + residual as the oracle.
        x = np.vstack([k, np.ones_like(k)]).T
        beta = np.linalg.solve(x.T @ x, x.T @ (0.05 * k + 2.0 + sine))
        expected = (0.05 * k + 2.0 + sine) - x @ beta
        resid, _, _ = detrend_phase(0.05 * k + 2.0 + sine)
        assert np.allclose(resid, expected, atol=1e-10)

    def test_residual_uncorrelated_with_index(self, rng):
        x = rng.normal(0, 1, 40)
        resid, _, _ = detrend_phase(x)
        k = np.arange(40)
        r = np.corrcoef(resid, k)[0, 1]
        assert abs(r) < 1e-10


class TestNormalize:
    def test_simple(self):
        assert np.allclose(normalize_phase(np.array([1.0, 2.0, 3.0])), [-1, 0, 1])

    def test_idempotent(self, rng):
        x = rng.normal(0, 1, 20)
        once = normalize_phase(x)
        assert np.allclose(normalize_phase(once), once, atol=1e-15)

    def test_zero_mean_property(self, rng):
        for _ in range(10):
            out = normalize_phase(rng.normal(3, 2, 33))
            assert abs(out.mean()) < 1e-12


def _flat_phase_channel(cfo=0.0, sfo=0.0, k=64, t=8):
    # Single zero-delay path: intrinsic phase is constant, so the fitted
    # trend slope is exactly the injected SFO slope.
    spec = ChannelSpec(
        paths=(PathComponent(1.3, 0.2, 0.0),), cfo_offset=cfo, sfo_slope=sfo
    )
    freqs = 5.18e9 + 312_500.0 * np.arange(k)
    return synthesize_matrix(spec, k, t, freqs)


class TestCalibrate:
    def test_injected_slope_recovered(self):
        m = _flat_phase_channel(cfo=0.4, sfo=0.01)
        _, report = calibrate(m)
        assert np.allclose(report.trend_slope, 0.01, atol=1e-9)

    def test_zero_artifact_channel_slope_zero(self):
        m = _flat_phase_channel()
        calibrated, report = calibrate(m)
        assert np.allclose(report.trend_slope, 0.0, atol=1e-12)
        assert np.max(np.abs(calibrated.phase())) < 1e-12

    def test_output_phases_zero_mean_and_trend_free(self, rng):
        m = random_matrix(rng, 17, 6)
        calibrated, _ = calibrate(m)
        phases = calibrated.phase()
        assert np.max(np.abs(phases.mean(axis=0))) < 1e-12
        k = np.arange(17)
        for t in range(6):
            slope = np.polyfit(k, phases[:, t], 1)[0]
            assert abs(slope) < 1e-12

    def test_amplitude_invariance_random(self, rng):
        m = random_matrix(rng, 33, 11)
        calibrated, _ = calibrate(m)
        rel = np.abs(np.abs(calibrated.values) - np.abs(m.values)) / np.abs(m.values)
        assert np.max(rel) <= 1e-12

    def test_idempotence(self):
        m = _flat_phase_channel(cfo=0.3, sfo=0.004, k=32, t=5)
        once, _ = calibrate(m)
        twice, _ = calibrate(once)
        assert np.max(np.abs(once.phase() - twice.phase())) < 1e-9

    def test_matches_per_vector_chain(self, rng):
        from csibio.calib import detrend_phase as dp, unwrap_phase as up

        m = random_matrix(rng, 12, 5)
        calibrated, report = calibrate(m)
        rotated, offsets = remove_cfo(m)
        for t in range(5):
            unwrapped = up(rotated.phase()[:, t])
            detrended, slope, _ = dp(unwrapped)
            expected = detrended - detrended.mean()
            assert np.allclose(calibrated.phase()[:, t], expected, atol=1e-12)
            assert report.trend_slope[t] == pytest.approx(slope, abs=1e-12)
