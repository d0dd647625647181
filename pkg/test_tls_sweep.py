"""
Tests for temperature/power sweep analysis
Surface assembly, regime classification, TLS law fitting and surface comparison
"""

import math

import numpy as np
import pytest
from scipy.constants import h as PLANCK, k as BOLTZMANN
from scipy.optimize import brentq

from analysis.tls_sweep import (aggregate, classify_regimes, compare_surfaces, fit_tls_law,
                                sweep_point, tls_loss)
from models.fit import Estimate, ResonatorFit
from models.sweep import REGIMES, QiSurface, SweepPoint
from models.trace import Band, TraceMeta
from utils.errors import (DuplicateCellError, InsufficientGridError, MixedResonatorError,
                          PreconditionError)

FREQUENCY = 4.49e9
F_DELTA0 = 1e-6
Q_OTHER = 5e6
P_C = -70.0
POWERS = np.linspace(-80.0, -40.0, 5)
TEMPERATURES = np.geomspace(25.0, 20000.0, 12)


def oracle_surface(temperatures=TEMPERATURES, powers=POWERS):
    t, p = np.meshgrid(temperatures, powers, indexing='ij')
    q_i = 1.0 / tls_loss(FREQUENCY, t, p, F_DELTA0, P_C, Q_OTHER)
    return QiSurface('C', 2, temperatures, powers, q_i, frequency=FREQUENCY)


def grid_points(device_id='C', resonator_index=2):
    return [SweepPoint(temperature_mk=t, power_dbm=p, q_i=1e5 + 10 * t + p, sigma=1e3,
                       f0=4.744e9, device_id=device_id, resonator_index=resonator_index)
            for t in (25.0, 100.0, 300.0) for p in (-80.0, -60.0)]


class TestAggregate:

    def test_builds_sorted_grid(self):
        points = grid_points()
        surface = aggregate(reversed(points))
        np.testing.assert_array_equal(surface.temperatures, [25.0, 100.0, 300.0])
        np.testing.assert_array_equal(surface.powers, [-80.0, -60.0])
        assert surface.q_i[1, 0] == pytest.approx(1e5 + 1000 - 80)
        assert surface.frequency == pytest.approx(4.744e9)
        assert surface.absent_cells == 0
        assert (surface.device_id, surface.resonator_index) == ('C', 2)

    def test_missing_cell_is_nan(self):
        surface = aggregate(grid_points()[:-1])
        assert math.isnan(surface.q_i[2, 1])
        assert surface.absent_cells == 1

    def test_disaggregate_round_trip(self):
        surface = aggregate(grid_points())
        rebuilt = aggregate(surface.disaggregate())
        np.testing.assert_array_equal(rebuilt.q_i, surface.q_i)
        np.testing.assert_array_equal(rebuilt.sigma, surface.sigma)

    def test_mixed_resonators_rejected(self):
        with pytest.raises(MixedResonatorError):
            aggregate(grid_points() + grid_points(resonator_index=3)[:1])

    def test_duplicate_cell_rejected(self):
        points = grid_points()
        with pytest.raises(DuplicateCellError):
            aggregate(points + points[:1])

    def test_empty_input_rejected(self):
        with pytest.raises(PreconditionError):
            aggregate([])

    def test_fits_need_sweep_metadata(self):
        def fit(meta):
            return ResonatorFit(f0=Estimate(4.744e9, 10.0), q_total=Estimate(1e5, 1e2),
                                q_c=Estimate(2e5, 2e2), delta_omega=Estimate(0.0, 1.0),
                                phi0=Estimate(0.0, 1e-3), q_i=Estimate(2e5, 5e2),
                                rms_residual=1e-3, n_iterations=8, converged=True,
                                fit_band=Band(center=4.744e9, span=1e5), meta=meta)

        point = sweep_point(fit(TraceMeta(device_id='C', power_dbm=-60.0, temperature_mk=25.0)))
        assert point.q_i == 2e5
        assert point.sigma == 5e2
        with pytest.raises(PreconditionError):
            sweep_point(fit(TraceMeta(device_id='C', temperature_mk=25.0)))


class TestClassifyRegimes:

    @staticmethod
    def spread_at_lowest_power(temperature_mk):
        low = tls_loss(FREQUENCY, temperature_mk, POWERS[0], F_DELTA0, P_C, Q_OTHER)
        high = tls_loss(FREQUENCY, temperature_mk, POWERS[-1], F_DELTA0, P_C, Q_OTHER)
        return float(low / high)

    def test_row_labels(self):
        report = classify_regimes(oracle_surface())
        assert len(report.row_labels) == len(TEMPERATURES)
        assert set(report.row_labels) <= set(REGIMES)
        assert report.row_labels[0] == 'tls_dominated'
        assert report.row_labels[-1] == 'saturated'
        assert report.spread[0] > report.spread[-1]
        assert all(report.monotonicity_flags.values())

    def test_dependent_boundary_within_one_grid_step(self):
        report = classify_regimes(oracle_surface())
        crossing = brentq(lambda t: self.spread_at_lowest_power(t) - 1.2, 25.0, 20000.0)

        boundary = report.boundaries[0]
        assert boundary.power_dbm == POWERS[0]
        above = TEMPERATURES[np.searchsorted(TEMPERATURES, crossing)]
        below = TEMPERATURES[np.searchsorted(TEMPERATURES, crossing) - 1]
        assert abs(boundary.dependent_mk - crossing) <= above - below
        assert boundary.saturated_mk > boundary.dependent_mk

    def test_scaling_q_i_keeps_labels_and_boundaries(self):
        surface = oracle_surface()
        scaled = QiSurface('C', 2, TEMPERATURES, POWERS, 3.7 * surface.q_i, frequency=FREQUENCY)
        base, other = classify_regimes(surface), classify_regimes(scaled)
        assert other.row_labels == base.row_labels
        np.testing.assert_allclose(other.spread, base.spread, rtol=1e-12)
        for a, b in zip(base.boundaries, other.boundaries):
            assert (a.dependent_mk is None) == (b.dependent_mk is None)
            if a.dependent_mk is not None:
                assert b.dependent_mk == pytest.approx(a.dependent_mk, rel=1e-9)
            if a.saturated_mk is not None:
                assert b.saturated_mk == pytest.approx(a.saturated_mk, rel=1e-9)

    def test_power_independent_surface_is_saturated_everywhere(self):
        row = np.geomspace(2e6, 5e5, len(TEMPERATURES))
        q_i = np.repeat(row[:, None], len(POWERS), axis=1)
        report = classify_regimes(QiSurface('C', 2, TEMPERATURES, POWERS, q_i))
        assert set(report.row_labels) == {'saturated'}
        assert all(s == 1.0 for s in report.spread)
        assert all(b.dependent_mk is None and b.saturated_mk is None for b in report.boundaries)

    def test_absent_cells_are_noted(self):
        surface = oracle_surface()
        q_i = surface.q_i.copy()
        q_i[4, 2] = np.nan
        report = classify_regimes(QiSurface('C', 2, TEMPERATURES, POWERS, q_i))
        assert any('absent' in note for note in report.notes)

    def test_small_grid_rejected(self):
        with pytest.raises(InsufficientGridError):
            classify_regimes(oracle_surface(temperatures=TEMPERATURES[:2]))

    def test_threshold_order(self):
        with pytest.raises(PreconditionError):
            classify_regimes(oracle_surface(), eps_sat=0.3, eps_dep=0.2)

    def test_regimes_attach_to_surface(self):
        surface = oracle_surface()
        labelled = surface.with_regimes(classify_regimes(surface).row_labels)
        assert labelled.regime.shape == surface.shape
        assert set(labelled.regime[0]) == {'tls_dominated'}


class TestTlsLaw:

    def test_cold_limit_saturates_thermal_factor(self):
        # hf / 2kT = 100
        cold = PLANCK * FREQUENCY / (2 * BOLTZMANN * 100) * 1e3
        assert tls_loss(FREQUENCY, cold, -60.0, F_DELTA0, P_C, Q_OTHER) == pytest.approx(
            tls_loss(FREQUENCY, 0.0, -60.0, F_DELTA0, P_C, Q_OTHER), rel=1e-15)

    def test_hot_limit_is_linear_in_frequency_over_temperature(self):
        hot = PLANCK * FREQUENCY / (2 * BOLTZMANN * 1e-3) * 1e3
        saturation = (1 + 10 ** ((-60.0 - P_C) / 10)) ** -0.5
        expected = F_DELTA0 * 1e-3 * saturation + 1 / Q_OTHER
        assert tls_loss(FREQUENCY, hot, -60.0, F_DELTA0, P_C, Q_OTHER) == pytest.approx(
            expected, rel=1e-9)

    def test_recovers_oracle_parameters(self):
        fit = fit_tls_law(oracle_surface())
        assert fit.converged
        assert fit.f_delta0 == pytest.approx(F_DELTA0, rel=1e-4)
        assert fit.p_c_dbm == pytest.approx(P_C, rel=1e-4)
        assert fit.q_other == pytest.approx(Q_OTHER, rel=1e-4)
        assert fit.rms < 1e-6

    def test_noisy_surfaces_recover_tls_strength_in_the_median(self):
        clean = oracle_surface()
        recovered = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            q_i = clean.q_i * (1 + 0.1 * rng.standard_normal(clean.shape))
            fit = fit_tls_law(QiSurface('C', 2, TEMPERATURES, POWERS, q_i, frequency=FREQUENCY))
            recovered.append(fit.f_delta0)
        assert np.median(recovered) == pytest.approx(F_DELTA0, rel=0.25)

    def test_flat_surface_has_no_tls_loss(self):
        q_i = np.full((len(TEMPERATURES), len(POWERS)), 1e6)
        fit = fit_tls_law(QiSurface('C', 2, TEMPERATURES, POWERS, q_i, frequency=FREQUENCY))
        assert fit.f_delta0 < 1e-9
        assert fit.q_other == pytest.approx(1e6, rel=1e-2)

    def test_small_grid_rejected(self):
        with pytest.raises(InsufficientGridError):
            fit_tls_law(oracle_surface(powers=POWERS[:2]))

    def test_frequency_required(self):
        surface = oracle_surface()
        bare = QiSurface('C', 2, surface.temperatures, surface.powers, surface.q_i)
        with pytest.raises(PreconditionError):
            fit_tls_law(bare)


class TestCompareSurfaces:

    def test_common_cells_only(self):
        a = oracle_surface()
        b_temps = TEMPERATURES[3:]
        b = QiSurface('B2', 2, b_temps, POWERS, 2 * a.q_i[3:])

        comparison = compare_surfaces(a, b, 'C', 'B2')
        assert len(comparison.cells) == len(b_temps) * len(POWERS)
        assert comparison.median_ratio == pytest.approx(2.0)
        assert comparison.cells[0]['temperature_mk'] == pytest.approx(TEMPERATURES[3])

    def test_disjoint_surfaces_rejected(self):
        a = oracle_surface(temperatures=TEMPERATURES[:4])
        b = oracle_surface(temperatures=TEMPERATURES[6:])
        with pytest.raises(PreconditionError):
            compare_surfaces(a, b)
