"""
Tests for traces, bands and metadata
Windowing, phase unwrapping and construction-time validation
"""

import numpy as np
import pytest

from models.trace import Band, Trace, TraceMeta, unwrap_phase, window
from utils.errors import EmptyWindowError, InsufficientSamplesError, TraceValidationError


def ramp_trace(lo=3e9, hi=5e9, n=1001, meta=None):
    freq = np.linspace(lo, hi, n)
    return Trace(freq, np.exp(-2j * np.pi * 50e-9 * freq), meta or TraceMeta())


class TestTraceValidation:

    def test_rejects_repeated_frequency(self):
        freq = np.linspace(4e9, 4.1e9, 10)
        freq[5] = freq[4]
        with pytest.raises(TraceValidationError):
            Trace(freq, np.ones(10))

    def test_rejects_length_mismatch(self):
        with pytest.raises(TraceValidationError):
            Trace(np.linspace(4e9, 4.1e9, 10), np.ones(9))

    def test_rejects_short_trace(self):
        with pytest.raises(TraceValidationError):
            Trace(np.linspace(4e9, 4.1e9, 7), np.ones(7))

    def test_rejects_non_finite_s21(self):
        s21 = np.ones(10, dtype=complex)
        s21[3] = np.nan
        with pytest.raises(TraceValidationError):
            Trace(np.linspace(4e9, 4.1e9, 10), s21)

    def test_rejects_non_positive_frequency(self):
        with pytest.raises(TraceValidationError):
            Trace(np.linspace(-1e6, 1e6, 10), np.ones(10))

    def test_arrays_are_read_only(self):
        trace = ramp_trace(n=16)
        with pytest.raises(ValueError):
            trace.freq[0] = 1.0
        with pytest.raises(ValueError):
            trace.s21[0] = 0.0

    def test_input_arrays_are_copied(self):
        freq = np.linspace(4e9, 4.1e9, 10)
        trace = Trace(freq, np.ones(10))
        freq[0] = 1.0
        assert trace.freq[0] == 4e9


class TestMetaAndBand:

    def test_resonator_index_limited_to_design_positions(self):
        with pytest.raises(TraceValidationError):
            TraceMeta(resonator_index=5)

    def test_negative_temperature_rejected(self):
        with pytest.raises(TraceValidationError):
            TraceMeta(temperature_mk=-1.0)

    def test_unknown_coupling_rejected(self):
        with pytest.raises(TraceValidationError):
            TraceMeta(coupling='galvanic')

    def test_same_resonator(self):
        a = TraceMeta(device_id='C', resonator_index=2, scan_kind='wide')
        b = TraceMeta(device_id='C', resonator_index=2, scan_kind='narrow', power_dbm=-60)
        c = TraceMeta(device_id='C', resonator_index=3)
        assert a.same_resonator(b)
        assert not a.same_resonator(c)

    def test_meta_round_trip(self):
        meta = TraceMeta(device_id='B2', resonator_index=4, power_dbm=-60.0,
                         temperature_mk=25.0, coupling='capacitive', scan_kind='narrow')
        assert TraceMeta.from_dict(meta.to_dict()) == meta

    def test_band_edges(self):
        band = Band(center=4e9, span=2e6)
        assert band.lo == pytest.approx(4e9 - 1e6)
        assert band.hi == pytest.approx(4e9 + 1e6)
        assert band.scaled(3).span == pytest.approx(6e6)
        assert band.scaled(3).center == band.center

    @pytest.mark.parametrize('center,span', [(4e9, 0.0), (4e9, -1.0), (1e6, 4e6)])
    def test_invalid_band(self, center, span):
        with pytest.raises(TraceValidationError):
            Band(center=center, span=span)


class TestWindow:

    def test_full_cover_window_is_identity(self):
        trace = ramp_trace()
        result = window(trace, Band(center=4e9, span=2e9))
        np.testing.assert_array_equal(result.freq, trace.freq)
        np.testing.assert_array_equal(result.s21, trace.s21)
        assert result.meta == trace.meta

    def test_window_keeps_exactly_the_points_inside(self):
        trace = ramp_trace(4.48e9, 4.50e9, 1001, TraceMeta(device_id='C', resonator_index=4))
        band = Band(center=4.492e9, span=0.004e9)
        expected = [f for f in trace.freq if band.lo <= f <= band.hi]

        result = window(trace, band)
        np.testing.assert_array_equal(result.freq, expected)
        assert 199 <= len(result) <= 201
        assert np.all(np.diff(result.freq) > 0)
        assert result.meta == trace.meta

    def test_disjoint_band_raises_empty_window(self):
        with pytest.raises(EmptyWindowError):
            window(ramp_trace(), Band(center=10e9, span=1e6))

    def test_window_with_too_few_samples(self):
        trace = ramp_trace(4e9, 4.1e9, 101)
        with pytest.raises(InsufficientSamplesError):
            window(trace, Band(center=4.05e9, span=3e6))

    def test_window_is_idempotent(self):
        trace = ramp_trace()
        band = Band(center=4.1e9, span=0.5e9)
        once = window(trace, band)
        twice = window(once, band)
        np.testing.assert_array_equal(once.freq, twice.freq)
        np.testing.assert_array_equal(once.s21, twice.s21)


class TestUnwrapPhase:

    def test_constant_trace_gives_zero_phase(self):
        trace = Trace(np.linspace(4e9, 4.1e9, 16), np.ones(16))
        np.testing.assert_array_equal(unwrap_phase(trace), np.zeros(16))

    def test_pure_delay_is_affine(self):
        tau = 50e-9
        trace = ramp_trace(4.0e9, 4.01e9, 1001)
        phase = unwrap_phase(trace)
        offset = phase + 2 * np.pi * tau * trace.freq
        assert np.ptp(offset) < 1e-9
        assert np.all(np.abs(np.diff(phase)) < np.pi)

    def test_single_branch_correction(self):
        raw = np.array([3.0] + [-3.0] * 7)
        trace = Trace(np.linspace(4e9, 4.1e9, 8), np.exp(1j * raw))
        phase = unwrap_phase(trace)
        assert phase[0] == pytest.approx(3.0)
        assert phase[1] == pytest.approx(2 * np.pi - 3.0)

    def test_unwrapped_phase_agrees_with_raw_modulo_two_pi(self):
        trace = ramp_trace()
        phase = unwrap_phase(trace)
        raw = np.angle(trace.s21)
        difference = np.mod(phase - raw + np.pi, 2 * np.pi) - np.pi
        np.testing.assert_allclose(difference, 0.0, atol=1e-9)
        assert phase[0] == raw[0]

    def test_negative_zero_imaginary_part_starts_at_plus_pi(self):
        s21 = np.full(8, complex(-1.0, -0.0))
        assert np.angle(s21[0]) == -np.pi
        phase = unwrap_phase(Trace(np.linspace(4e9, 4.1e9, 8), s21))
        np.testing.assert_array_equal(phase, np.full(8, np.pi))

    def test_magnitude_and_phase_helpers(self):
        s21 = np.full(8, 0.1 * np.exp(1j * np.pi / 2))
        trace = Trace(np.linspace(4e9, 4.1e9, 8), s21)
        np.testing.assert_allclose(trace.magnitude_db(), -20.0)
        np.testing.assert_allclose(trace.phase_deg(), 90.0)
