"""
Electrical delay estimation
Background phase fit on a wide scan with the resonance region excluded, and delay removal
"""

import logging
from typing import Optional

import numpy as np

from analysis.notch_model import bracket
from models.fit import DelayFit
from models.notch import NotchParams
from models.trace import Band, Trace
from utils.errors import (InsufficientSamplesError, PathologicalUnwrapError,
                          PreconditionError)

logger = logging.getLogger(__name__)

EXCLUSION_FACTOR = 3.0
MIN_SPAN_FACTOR = 5.0
MIN_RETAINED_SAMPLES = 16
MAX_RETAINED_STEP = np.pi / 2


def exclusion_band(narrow_band: Band, factor: float = EXCLUSION_FACTOR) -> Band:
    """Region left out of the background fit: factor times the narrow span, same center"""
    return narrow_band.scaled(factor)


def fit_delay(wide: Trace, narrow_band: Band, resonator: Optional[NotchParams] = None,
              background_order: int = 1, exclusion_factor: float = EXCLUSION_FACTOR) -> DelayFit:
    """Fit the cable phase background of a wide scan

    The polynomial is expanded about the narrow-band center; tau is minus the
    background slope there over 2 pi. When a resonator is given its bracketed
    phase is removed from the wide scan before fitting.
    """
    if background_order not in (1, 2):
        raise PreconditionError(f"background_order must be 1 or 2, got {background_order}")

    wide_span = float(wide.freq[-1] - wide.freq[0])
    if wide_span < MIN_SPAN_FACTOR * narrow_band.span * (1 - 1e-9):
        raise PreconditionError(
            f"Wide scan spans {wide_span:.6g} Hz; at least {MIN_SPAN_FACTOR:g}x the "
            f"narrow span ({narrow_band.span:.6g} Hz) is required")

    excluded = exclusion_band(narrow_band, exclusion_factor)
    phase = wide.unwrap_phase()
    if resonator is not None:
        resonance = bracket(wide.freq, resonator.f0, resonator.q_total, resonator.q_c,
                            resonator.delta_omega)
        phase = phase - np.unwrap(np.angle(resonance))

    keep = ~excluded.contains(wide.freq)
    n_used = int(np.count_nonzero(keep))
    if n_used < MIN_RETAINED_SAMPLES:
        raise InsufficientSamplesError(
            f"Only {n_used} samples outside {excluded}; the delay fit needs "
            f"{MIN_RETAINED_SAMPLES}")

    adjacent = keep[1:] & keep[:-1]
    steps = np.abs(np.diff(phase))[adjacent]
    if steps.size and steps.max() > MAX_RETAINED_STEP:
        worst = int(np.flatnonzero(adjacent)[np.argmax(steps)])
        raise PathologicalUnwrapError(
            f"Phase step of {steps.max():.3f} rad between retained samples at "
            f"{wide.freq[worst] / 1e9:.7f} GHz; the scan is too coarse for its delay",
            {'index': worst, 'step': float(steps.max())})

    reference = narrow_band.center
    offsets = wide.freq[keep] - reference
    coefficients = np.polyfit(offsets, phase[keep], background_order)

    residual = phase[keep] - np.polyval(coefficients, offsets)
    rms = float(np.sqrt(np.mean(residual ** 2)))
    tau = -float(coefficients[-2]) / (2 * np.pi)
    intercept = float(np.polyval(coefficients, -reference))

    logger.info(f"Delay fit: tau = {tau * 1e9:.6f} ns from {n_used} samples, "
                f"rms {rms:.3g} rad")
    return DelayFit(tau=tau, phase_intercept=intercept, excluded_band=excluded,
                    rms_residual=rms, n_used=n_used, background_order=background_order,
                    reference_freq=reference, coefficients=tuple(float(c) for c in coefficients))


def correct(trace: Trace, fit: DelayFit) -> Trace:
    """Remove the fitted delay: s21 * exp(+2 pi i f tau)"""
    if fit.tau == 0:
        return trace.with_s21(trace.s21)
    return trace.with_s21(trace.s21 * np.exp(2j * np.pi * trace.freq * fit.tau))
