"""
Tests for the notch resonator forward model
S21 identities, phase model, synthetic traces and coupling Q from the linewidth
"""

import math

import numpy as np
import pytest

from analysis.notch_model import (half_max_width, linewidth_response, phase_at,
                                  qc_from_linewidth, s21_at, synth_trace)
from models.notch import NoiseSpec, NotchParams
from models.trace import Band, TraceMeta
from utils.errors import NonConvergenceError, PreconditionError


@pytest.fixture
def resonator():
    return NotchParams(f0=5e9, q_total=1e5, q_c=2e5)


class TestTransmission:

    @pytest.mark.parametrize('sign', [-1, 1])
    def test_far_detuned_transmission_is_unity(self, resonator, sign):
        f = resonator.f0 + sign * 1000 * resonator.linewidth
        assert abs(s21_at(resonator, f) - 1) < 1e-3

    def test_on_resonance_depth(self, resonator):
        value = s21_at(resonator, resonator.f0)
        assert value.real == pytest.approx(0.5, abs=1e-15)
        assert value.imag == pytest.approx(0.0, abs=1e-15)

    def test_lossless_resonator_extinguishes(self):
        params = NotchParams(f0=4.744e9, q_total=5.68e6, q_c=5.68e6)
        assert abs(s21_at(params, params.f0)) < 1e-15

    def test_magnitude_symmetric_about_resonance(self, resonator):
        detuning = np.array([0.1, 0.5, 1.0, 3.0, 20.0]) * resonator.linewidth
        above = np.abs(s21_at(resonator, resonator.f0 + detuning))
        below = np.abs(s21_at(resonator, resonator.f0 - detuning))
        np.testing.assert_allclose(above, below, rtol=1e-10)

    def test_delay_rotates_phase_linearly(self):
        params = NotchParams(f0=5e9, q_total=1e5, q_c=2e5, delay=40e-9)
        f = np.array([4.9e9, 5.1e9])
        undelayed = NotchParams(f0=5e9, q_total=1e5, q_c=2e5)
        ratio = np.asarray(s21_at(params, f)) / np.asarray(s21_at(undelayed, f))
        np.testing.assert_allclose(ratio, np.exp(-2j * np.pi * f * 40e-9), rtol=1e-9)

    def test_q_total_above_q_c_rejected(self):
        with pytest.raises(PreconditionError):
            NotchParams(f0=5e9, q_total=2e5, q_c=1e5)

    def test_internal_q(self, resonator):
        assert resonator.q_i == pytest.approx(2e5)
        assert resonator.lossless().q_i is None


class TestPhase:

    def test_far_detuned_phase_is_offset(self):
        # Deviation from phi0 is (Q/Qc) / (2 N) at N linewidths
        params = NotchParams(f0=5e9, q_total=1e5, q_c=1e7, phi0=0.3)
        for sign in (-1, 1):
            f = params.f0 + sign * 1e4 * params.linewidth
            assert phase_at(params, f) == pytest.approx(0.3, abs=1e-6)

    def test_phase_zero_on_resonance(self, resonator):
        assert phase_at(resonator, resonator.f0) == pytest.approx(0.0, abs=1e-15)

    def test_phase_half_linewidth_above_resonance(self, resonator):
        f = resonator.f0 * (1 + 1 / (2 * resonator.q_total))
        assert phase_at(resonator, f) == pytest.approx(math.atan2(0.25, 0.75), rel=1e-9)

    def test_phase_is_amplitude_invariant(self):
        f = np.linspace(4.99995e9, 5.00005e9, 101)
        base = NotchParams(f0=5e9, q_total=1e5, q_c=2e5, delta_omega=3e3, phi0=-1.2)
        scaled = NotchParams(f0=5e9, q_total=1e5, q_c=2e5, delta_omega=3e3, phi0=-1.2, amp=37.5)
        np.testing.assert_array_equal(phase_at(base, f), phase_at(scaled, f))

    def test_phase_wrapped_to_half_open_interval(self):
        params = NotchParams(f0=5e9, q_total=1e5, q_c=2e5, phi0=math.pi)
        assert phase_at(params, params.f0) == pytest.approx(math.pi)
        f = np.linspace(4.9999e9, 5.0001e9, 1001)
        wrapped = np.asarray(phase_at(NotchParams(f0=5e9, q_total=1e5, q_c=2e5, phi0=3.0), f))
        assert np.all(wrapped > -math.pi) and np.all(wrapped <= math.pi)


class TestSynthTrace:

    def test_noiseless_trace_equals_model(self, resonator):
        band = Band(center=resonator.f0, span=10 * resonator.linewidth)
        trace = synth_trace(resonator, band, 101)
        np.testing.assert_array_equal(trace.s21, s21_at(resonator, trace.freq))
        assert trace.freq[0] == pytest.approx(band.lo)
        assert trace.freq[-1] == pytest.approx(band.hi)
        np.testing.assert_allclose(np.diff(trace.freq), band.span / 100, rtol=1e-6)

    def test_same_seed_is_bit_identical(self, resonator):
        band = Band(center=resonator.f0, span=10 * resonator.linewidth)
        a = synth_trace(resonator, band, 501, NoiseSpec(sigma=1e-3, seed=42))
        b = synth_trace(resonator, band, 501, NoiseSpec(sigma=1e-3, seed=42))
        c = synth_trace(resonator, band, 501, NoiseSpec(sigma=1e-3, seed=43))
        np.testing.assert_array_equal(a.s21, b.s21)
        assert not np.array_equal(a.s21, c.s21)

    def test_noise_level(self, resonator):
        band = Band(center=resonator.f0, span=10 * resonator.linewidth)
        trace = synth_trace(resonator, band, 10001, NoiseSpec(sigma=1e-3, seed=7))
        noise = trace.s21 - s21_at(resonator, trace.freq)
        assert 0.00095 <= np.std(noise.real, ddof=1) <= 0.00105
        assert 0.00095 <= np.std(noise.imag, ddof=1) <= 0.00105

    def test_metadata_attached(self, resonator):
        meta = TraceMeta(device_id='C', resonator_index=2, scan_kind='narrow')
        trace = synth_trace(resonator, Band(center=5e9, span=1e6), 64, meta=meta)
        assert trace.meta == meta

    def test_too_few_points(self, resonator):
        with pytest.raises(PreconditionError):
            synth_trace(resonator, Band(center=5e9, span=1e6), 7)

    def test_negative_noise_rejected(self):
        with pytest.raises(PreconditionError):
            NoiseSpec(sigma=-1.0)


class TestLinewidth:

    def test_dense_grid_width_is_f0_over_q(self, resonator):
        f = np.linspace(resonator.f0 - 5 * resonator.linewidth,
                        resonator.f0 + 5 * resonator.linewidth, 200001)
        width = half_max_width(f, np.asarray(linewidth_response(resonator, f)))
        assert width == pytest.approx(resonator.f0 / resonator.q_total, rel=1e-6)

    def test_half_max_width_needs_both_crossings(self):
        f = np.linspace(0.0, 1.0, 11)
        assert half_max_width(f, np.linspace(1.0, 0.0, 11)) is None

    @pytest.mark.parametrize('f0,q_c', [(4.7440e9, 5.68e6), (6.6598e9, 3.69e6), (5e9, 1e5)])
    def test_simulated_coupling_q(self, f0, q_c):
        result = qc_from_linewidth(NotchParams(f0=f0, q_total=q_c, q_c=q_c))
        assert result.q_c == pytest.approx(q_c, rel=1e-3)
        assert result.fwhm == pytest.approx(f0 / q_c, rel=1e-3)
        assert result.levels <= 40

    @pytest.mark.parametrize('q', [1e4, 1e5, 1e6, 5.68e6])
    def test_linewidth_identity(self, q):
        result = qc_from_linewidth(NotchParams(f0=5e9, q_total=q, q_c=q))
        assert result.q_c == pytest.approx(q, rel=1e-3)

    def test_asymmetric_lossless_resonator(self):
        params = NotchParams(f0=5e9, q_total=1e5, q_c=1e5, delta_omega=2e4)
        assert qc_from_linewidth(params).q_c == pytest.approx(1e5, rel=1e-3)

    def test_lossy_resonator_rejected(self, resonator):
        with pytest.raises(PreconditionError):
            qc_from_linewidth(resonator)

    def test_refinement_budget_exhausted(self):
        with pytest.raises(NonConvergenceError):
            qc_from_linewidth(NotchParams(f0=5e9, q_total=1e6, q_c=1e6), max_levels=3)
