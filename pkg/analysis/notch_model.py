"""
Notch resonator forward model
Hanger-type S21, synthetic traces and coupling Q from the dip linewidth
"""

import logging
import math
from typing import Optional

import numpy as np

from models.notch import NotchParams, NoiseSpec, LinewidthResult
from models.trace import Band, Trace, TraceMeta
from utils.errors import NonConvergenceError, PreconditionError

logger = logging.getLogger(__name__)

# Points on each side of f0 on the coarsest refinement grid
_HALF_POINTS = 32
# Refined windows cover +-_ZOOM_WIDTHS previous FWHM estimates
_ZOOM_WIDTHS = 4.0
_MIN_POINTS_ABOVE_HALF = 5


def bracket(f, f0: float, q_total: float, q_c: float, delta_omega: float = 0.0):
    """The bracketed notch response 1 - (Q/Qc)(1 + 2iQ dw/f0)/(1 + 2iQ (f-f0)/f0)"""
    f = np.asarray(f, dtype=float)
    numerator = 1 + 2j * q_total * delta_omega / f0
    denominator = 1 + 2j * q_total * (f - f0) / f0
    return 1 - (q_total / q_c) * numerator / denominator


def _scalar_or_array(value):
    return value.item() if np.ndim(value) == 0 else value


def s21_at(params: NotchParams, f):
    """Complex transmission including amplitude scale, offset and electrical delay"""
    f = np.asarray(f, dtype=float)
    response = bracket(f, params.f0, params.q_total, params.q_c, params.delta_omega)
    environment = params.amp * np.exp(1j * (params.phi0 - 2 * np.pi * f * params.delay))
    return _scalar_or_array(response * environment)


def phase_at(params: NotchParams, f):
    """arg of the bracketed response plus phi0, wrapped into (-pi, pi]"""
    response = bracket(f, params.f0, params.q_total, params.q_c, params.delta_omega)
    phase = np.angle(response) + params.phi0
    # np.angle returns [-pi, pi]; map -pi to +pi so the interval is half-open
    wrapped = np.pi - np.mod(np.pi - phase, 2 * np.pi)
    return _scalar_or_array(wrapped)


def linewidth_response(params: NotchParams, f):
    """Dip response |1 - S21|^2 of the bracketed model, a Lorentzian of width f0/Q"""
    response = bracket(f, params.f0, params.q_total, params.q_c, params.delta_omega)
    return _scalar_or_array(np.abs(1 - response) ** 2)


def synth_trace(params: NotchParams, band: Band, n_points: int,
                noise: NoiseSpec = NoiseSpec(), meta: TraceMeta = TraceMeta()) -> Trace:
    """Uniformly sampled trace of the model with seeded complex Gaussian noise"""
    if n_points < 8:
        raise PreconditionError(f"n_points must be at least 8, got {n_points}")

    freq = np.linspace(band.lo, band.hi, n_points)
    s21 = np.asarray(s21_at(params, freq), dtype=complex)
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        s21 = s21 + noise.sigma * (rng.standard_normal(n_points)
                                   + 1j * rng.standard_normal(n_points))

    logger.debug(f"Synthesized {n_points} points of {params} over {band}")
    return Trace(freq, s21, meta)


def half_max_width(freq: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Full width at half maximum of a single peak by linear interpolation

    Returns None when either half-maximum crossing lies outside the samples.
    """
    peak = int(np.argmax(y))
    half = y[peak] / 2

    below_left = np.nonzero(y[:peak] < half)[0]
    below_right = np.nonzero(y[peak + 1:] < half)[0]
    if below_left.size == 0 or below_right.size == 0:
        return None

    i = below_left[-1]
    left = freq[i] + (half - y[i]) * (freq[i + 1] - freq[i]) / (y[i + 1] - y[i])
    j = peak + 1 + below_right[0]
    right = freq[j - 1] + (half - y[j - 1]) * (freq[j] - freq[j - 1]) / (y[j] - y[j - 1])
    return float(right - left)


def qc_from_linewidth(params_lossless: NotchParams, tolerance: float = 1e-4,
                      max_levels: int = 40) -> LinewidthResult:
    """Coupling Q as f0 / FWHM of |1 - S21|^2 with factor-2 grid refinement

    Grids are uniform and centered on f0 so the peak is always sampled.
    Each level halves the step and zooms onto the previous estimate; the
    search stops once two resolved levels agree to the relative tolerance.
    """
    params = params_lossless
    if abs(params.q_total - params.q_c) > 1e-9 * params.q_c:
        raise PreconditionError(
            f"qc_from_linewidth needs a lossless resonator (q_total == q_c), "
            f"got q_total={params.q_total:.6g}, q_c={params.q_c:.6g}")

    f0 = params.f0
    half_points = _HALF_POINTS
    step = (f0 / 4) / (2 * half_points)
    previous = None

    for level in range(1, max_levels + 1):
        offsets = np.arange(-half_points, half_points + 1) * step
        freq = f0 + offsets
        y = np.asarray(linewidth_response(params, freq))
        fwhm = half_max_width(freq, y)

        if fwhm is None:
            # Window narrower than the peak: widen at the same resolution
            half_points *= 2
            logger.debug(f"Level {level}: no half-maximum crossings, widening to "
                         f"{2 * half_points + 1} points")
            continue

        resolved = np.count_nonzero(y >= y.max() / 2) >= _MIN_POINTS_ABOVE_HALF
        logger.debug(f"Level {level}: step {step:.6g} Hz, FWHM {fwhm:.9g} Hz, "
                     f"resolved={resolved}")

        if resolved and previous is not None and abs(fwhm - previous) <= tolerance * fwhm:
            q_c = f0 / fwhm
            logger.info(f"Linewidth Q_C = {q_c:.6g} at {f0 / 1e9:.7f} GHz after {level} levels")
            return LinewidthResult(q_c=q_c, fwhm=fwhm, levels=level, step=step, f0=f0)

        previous = fwhm if resolved else None
        step /= 2
        half_points = max(_HALF_POINTS, int(math.ceil(_ZOOM_WIDTHS * fwhm / step)))

    raise NonConvergenceError(
        f"Linewidth did not converge within {max_levels} refinement levels",
        {'f0': f0, 'q_c': params.q_c, 'last_fwhm': previous})
