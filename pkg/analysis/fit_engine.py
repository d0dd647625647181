"""
Notch phase fitting engine
Initial guesses, damped least-squares phase fits, Q_i decomposition and the
wide/narrow fitting pipeline
"""

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from uncertainties import correlated_values, ufloat

from analysis.delay_fit import correct, fit_delay
from analysis.notch_model import bracket, half_max_width
from models.fit import DelayFit, Estimate, FitConfig, PipelineResult, ResonatorFit
from models.notch import NotchParams
from models.trace import Trace
from utils.errors import NoDipFoundError, PreconditionError, SingularMatrixError

logger = logging.getLogger(__name__)

PARAMETER_NAMES = ('f0', 'q_total', 'q_c', 'delta_omega', 'phi0')

# Internal parameters: f0, ln Q, ln Qc, delta_omega, phi0
_LOG_SCALED = (False, True, True, False, False)

_MAX_DAMPING = 1e16
_GRADIENT_TOLERANCE = 1e-6
_TAIL_FRACTION = 0.1
_DIP_SIGNIFICANCE = 3.0
# rms phase residual (rad) treated as rounding noise
_RESIDUAL_FLOOR = 1e-9


def _to_internal(params: NotchParams) -> np.ndarray:
    return np.array([params.f0, math.log(params.q_total), math.log(params.q_c),
                     params.delta_omega, params.phi0])


def _to_natural(theta: np.ndarray) -> np.ndarray:
    return np.array([theta[0], math.exp(theta[1]), math.exp(theta[2]), theta[3], theta[4]])


def model_phase(theta: Sequence[float], freq: np.ndarray) -> np.ndarray:
    """Unwrapped model phase for internal parameters (f0, ln Q, ln Qc, dw, phi0)"""
    f0, log_q, log_qc, delta_omega, phi0 = theta
    response = bracket(freq, f0, math.exp(log_q), math.exp(log_qc), delta_omega)
    return np.unwrap(np.angle(response)) + phi0


def phase_jacobian(theta: Sequence[float], freq: np.ndarray) -> np.ndarray:
    """Analytic derivatives of the model phase with respect to the internal parameters

    Uses d arg(B) = Im(dB / B) for B = 1 - r N / D with r = Q/Qc,
    N = 1 + 2iQ dw/f0 and D = 1 + 2iQ (f - f0)/f0.
    """
    f0, log_q, log_qc, delta_omega, _ = theta
    freq = np.asarray(freq, dtype=float)
    q = math.exp(log_q)
    r = q / math.exp(log_qc)

    numerator = 1 + 2j * q * delta_omega / f0
    denominator = 1 + 2j * q * (freq - f0) / f0
    response = 1 - r * numerator / denominator

    def d_arg(dr, dn, dd):
        d_response = -(dr * numerator / denominator + r * dn / denominator
                       - r * numerator * dd / denominator ** 2)
        return np.imag(d_response / response)

    jac = np.empty((freq.size, 5))
    jac[:, 0] = d_arg(0.0, -2j * q * delta_omega / f0 ** 2, -2j * q * freq / f0 ** 2)
    jac[:, 1] = d_arg(r, numerator - 1, denominator - 1)
    jac[:, 2] = d_arg(-r, 0.0, 0.0)
    jac[:, 3] = d_arg(0.0, 2j * q / f0, 0.0)
    jac[:, 4] = 1.0
    return jac


def init_guess(narrow: Trace) -> NotchParams:
    """Starting parameters read off the magnitude dip and the phase tails"""
    magnitude = np.abs(narrow.s21)
    mag_max = float(magnitude.max())
    mag_min = float(magnitude.min())
    depth = mag_max - mag_min

    steps = np.diff(magnitude)
    noise = 1.4826 * float(np.median(np.abs(steps - np.median(steps)))) / math.sqrt(2)
    if depth <= 1e-12 * mag_max or depth <= _DIP_SIGNIFICANCE * noise:
        raise NoDipFoundError(
            f"No resonance dip in {narrow}: depth {depth:.3g} against noise {noise:.3g}",
            {'depth': depth, 'noise': noise})

    f0 = float(narrow.freq[np.argmin(magnitude)])

    power_dip = mag_max ** 2 - magnitude ** 2
    width = half_max_width(narrow.freq, power_dip)
    if width is None or width <= 0:
        width = float(narrow.freq[-1] - narrow.freq[0]) / 2
    q_total = f0 / width
    q_c = q_total / (1 - mag_min / mag_max)

    phase = narrow.unwrap_phase()
    n_tail = max(1, int(len(narrow) * _TAIL_FRACTION))
    phi0 = float(np.median(np.concatenate([phase[:n_tail], phase[-n_tail:]])))

    guess = NotchParams(f0=f0, q_total=q_total, q_c=q_c, delta_omega=0.0, phi0=phi0)
    logger.debug(f"Initial guess {guess}, phi0={phi0:.4f} rad")
    return guess


class PhaseFitter:
    """Levenberg-Marquardt fit of the notch phase model to a delay-corrected trace"""

    def __init__(self, config: Optional[FitConfig] = None):
        self.config = config or FitConfig()

    def fit(self, trace: Trace, guess: NotchParams) -> ResonatorFit:
        freq = trace.freq
        theta = _to_internal(guess)

        # Put the data on the branch of the model at the lowest frequency
        data = trace.unwrap_phase()
        start = model_phase(theta, freq[:1])[0]
        data = data + 2 * np.pi * np.round((start - data[0]) / (2 * np.pi))

        lower, upper = self._internal_bounds()

        # Symmetric shape first, then release the asymmetry
        symmetric = np.array([True, True, True, False, True])
        theta, first_iterations, _, _ = self._minimize(theta, freq, data, symmetric, lower, upper)
        theta, iterations, converged, message = self._minimize(
            theta, freq, data, np.ones(5, dtype=bool), lower, upper)
        iterations += first_iterations

        return self._result(trace, data, theta, iterations, converged, message)

    def _internal_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lower = np.full(5, -np.inf)
        upper = np.full(5, np.inf)
        for i, name in enumerate(PARAMETER_NAMES):
            if name not in self.config.bounds:
                continue
            lo, hi = self.config.bounds[name]
            if _LOG_SCALED[i]:
                lo = math.log(lo) if lo > 0 else -np.inf
                hi = math.log(hi)
            lower[i], upper[i] = lo, hi
        return lower, upper

    @staticmethod
    def _step_scale(theta: np.ndarray) -> np.ndarray:
        linewidth = theta[0] / math.exp(theta[1])
        return np.array([abs(theta[0]), 1.0, 1.0,
                         abs(theta[3]) + linewidth, abs(theta[4]) + 1.0])

    @staticmethod
    def _gradient_orthogonal(jac: np.ndarray, residual: np.ndarray) -> bool:
        norm = np.linalg.norm(residual)
        if norm == 0:
            return True
        cosines = np.abs(jac.T @ residual) / (np.linalg.norm(jac, axis=0) * norm)
        return bool(np.all(cosines <= _GRADIENT_TOLERANCE))

    def _minimize(self, theta, freq, data, free, lower, upper):
        """Damped Gauss-Newton iterations over the free internal parameters"""
        tolerance = self.config.relative_tolerance
        damping = self.config.damping_init

        residual = data - model_phase(theta, freq)
        cost = float(residual @ residual)
        jac = phase_jacobian(theta, freq)[:, free]

        for iteration in range(1, self.config.max_iterations + 1):
            if cost == 0.0:
                return theta, iteration - 1, True, 'exact fit'

            column_norm = np.linalg.norm(jac, axis=0)
            if np.any(column_norm == 0):
                raise SingularMatrixError("Phase model is insensitive to a fitted parameter")
            scaled = jac / column_norm
            normal = scaled.T @ scaled
            try:
                step = np.linalg.solve(normal + damping * np.eye(normal.shape[0]),
                                       scaled.T @ residual) / column_norm
            except np.linalg.LinAlgError:
                damping *= 10
                continue

            candidate = theta.copy()
            candidate[free] += step
            candidate = np.clip(candidate, lower, upper)
            taken = candidate[free] - theta[free]
            small = bool(np.all(np.abs(taken) <= tolerance * self._step_scale(theta)[free]))

            new_residual = data - model_phase(candidate, freq)
            new_cost = float(new_residual @ new_residual)

            if np.isfinite(new_cost) and new_cost <= cost:
                theta, residual, cost = candidate, new_residual, new_cost
                jac = phase_jacobian(theta, freq)[:, free]
                damping = max(damping / 3, 1e-15)
                logger.debug(f"Iteration {iteration}: cost {cost:.6g}, damping {damping:.3g}")
                if small:
                    return theta, iteration, True, 'parameter step below tolerance'
            else:
                damping *= 10
                if small or damping > _MAX_DAMPING:
                    at_floor = math.sqrt(cost / residual.size) <= _RESIDUAL_FLOOR
                    converged = at_floor or self._gradient_orthogonal(jac, residual)
                    message = ('no further decrease at a stationary point' if converged
                               else 'stalled away from a stationary point')
                    return theta, iteration, converged, message

        return theta, self.config.max_iterations, False, 'iteration limit reached'

    def _result(self, trace, data, theta, iterations, converged, message) -> ResonatorFit:
        freq = trace.freq
        residual = data - model_phase(theta, freq)
        n_points = freq.size
        rms = float(np.sqrt(np.mean(residual ** 2)))

        jac = phase_jacobian(theta, freq)
        column_norm = np.linalg.norm(jac, axis=0)
        if np.any(column_norm == 0) or np.linalg.matrix_rank(jac / column_norm) < 5:
            raise SingularMatrixError("Jacobian is rank-deficient at the solution",
                                      {'theta': theta.tolist()})
        scaled = jac / column_norm

        variance = max(float(residual @ residual) / (n_points - 5), np.finfo(float).eps ** 2)
        internal_cov = variance * np.linalg.inv(scaled.T @ scaled) / np.outer(column_norm, column_norm)
        natural = _to_natural(theta)
        transform = np.diag([1.0, natural[1], natural[2], 1.0, 1.0])
        covariance = transform @ internal_cov @ transform
        sigmas = np.sqrt(np.diag(covariance))

        f0, q_total, q_c, delta_omega, phi0 = (float(v) for v in natural)

        if converged and not trace.band.contains(f0):
            converged, message = False, f'fitted f0 {f0 / 1e9:.7f} GHz left the fitted band'
        if converged and not (np.all(np.isfinite(sigmas)) and np.all(sigmas > 0)):
            converged, message = False, 'non-finite parameter uncertainties'
        if converged:
            # Second differences remove the smooth signal and leave the point-to-point scatter
            scatter = float(np.sqrt(np.mean(np.diff(data, 2) ** 2) / 6))
            if rms > 3 * scatter + _RESIDUAL_FLOOR:
                converged, message = False, 'residual exceeds the point-to-point scatter'

        q_i = None
        if q_c > q_total:
            q, qc = correlated_values([q_total, q_c], covariance[1:3, 1:3].tolist())
            derived = q * qc / (qc - q)
            q_i = Estimate(float(derived.nominal_value), float(derived.std_dev))

        estimates = [Estimate(value, float(sigma)) for value, sigma in zip(natural, sigmas)]
        fit = ResonatorFit(f0=estimates[0], q_total=estimates[1], q_c=estimates[2],
                           delta_omega=estimates[3], phi0=estimates[4], q_i=q_i,
                           rms_residual=rms, n_iterations=iterations, converged=converged,
                           fit_band=trace.band, meta=trace.meta,
                           covariance=covariance.tolist(), message=message)

        if converged:
            logger.info(f"Phase fit converged: {fit.summary()}")
        else:
            logger.warning(f"Phase fit did not converge ({message}): {fit.summary()}")
        return fit


def fit_phase(narrow_corrected: Trace, guess: NotchParams,
              config: Optional[FitConfig] = None) -> ResonatorFit:
    """Fit the notch phase model to a delay-corrected narrow scan"""
    return PhaseFitter(config).fit(narrow_corrected, guess)


def qi_from(q_total: float, q_c: float, sigma_q_total: Optional[float] = None,
            sigma_q_c: Optional[float] = None) -> Union[float, Estimate]:
    """Internal Q from 1/Qi = 1/Q - 1/Qc

    Returns a float, or an Estimate with quadrature-propagated sigma when
    either uncertainty is supplied.
    """
    if not (q_total > 0 and q_c > 0):
        raise PreconditionError("q_total and q_c must be positive")
    if q_total >= q_c:
        raise PreconditionError(
            f"q_total={q_total:.6g} must be below q_c={q_c:.6g} for a positive Q_i")

    if sigma_q_total is None and sigma_q_c is None:
        return q_total * q_c / (q_c - q_total)

    q = ufloat(q_total, sigma_q_total or 0.0)
    qc = ufloat(q_c, sigma_q_c or 0.0)
    derived = q * qc / (qc - q)
    return Estimate(float(derived.nominal_value), float(derived.std_dev))


def _fit_theta(fit: ResonatorFit) -> np.ndarray:
    return np.array([fit.f0.value, math.log(fit.q_total.value), math.log(fit.q_c.value),
                     fit.delta_omega.value, fit.phi0.value])


def phase_curves(corrected: Trace, fit: ResonatorFit) -> Tuple[np.ndarray, np.ndarray]:
    """Data and model phase of a delay-corrected trace, on the same 2 pi branch"""
    model = model_phase(_fit_theta(fit), corrected.freq)
    data = corrected.unwrap_phase()
    data = data + 2 * np.pi * np.round(np.median(model - data) / (2 * np.pi))
    return data, model


def extrapolation_rms(wide: Trace, delay: DelayFit, fit: ResonatorFit) -> float:
    """rms between the fitted model and the delay-corrected wide scan phase"""
    data = correct(wide, delay).unwrap_phase()
    residual = data - model_phase(_fit_theta(fit), wide.freq)
    residual = residual - 2 * np.pi * np.round(np.median(residual) / (2 * np.pi))
    return float(np.sqrt(np.mean(residual ** 2)))


def fit_pipeline(wide: Trace, narrow: Trace, config: Optional[FitConfig] = None,
                 background_order: int = 1, exclusion_factor: float = 3.0,
                 max_passes: int = 10) -> PipelineResult:
    """Delay fit, delay removal, initial guess and phase fit for a wide/narrow scan pair

    After the first phase fit the delay is refit with the fitted resonance
    removed from the wide scan, and the narrow scan is refit, until tau
    settles or max_passes is reached.
    """
    if not wide.meta.same_resonator(narrow.meta):
        raise PreconditionError(
            f"Wide scan ({wide.meta.device_id}, resonator {wide.meta.resonator_index}) and "
            f"narrow scan ({narrow.meta.device_id}, resonator {narrow.meta.resonator_index}) "
            f"describe different resonators")

    narrow_band = narrow.band
    delay = fit_delay(wide, narrow_band, background_order=background_order,
                      exclusion_factor=exclusion_factor)
    corrected = correct(narrow, delay)
    fit = fit_phase(corrected, init_guess(corrected), config)

    passes = 1
    # A residual delay error can fail the scatter test, so refit while f0 stays in band
    while (passes < max_passes and narrow_band.contains(fit.f0.value)
           and fit.q_total.value < fit.q_c.value):
        resonator = fit.as_notch_params()
        refined = fit_delay(wide, narrow_band, resonator=resonator,
                            background_order=background_order,
                            exclusion_factor=exclusion_factor)
        change = abs(refined.tau - delay.tau)
        delay = refined
        corrected = correct(narrow, delay)
        fit = fit_phase(corrected, resonator, config)
        passes += 1
        logger.debug(f"Delay pass {passes}: tau = {delay.tau * 1e9:.9f} ns (change {change:.3g} s)")
        if change <= 1e-9 * abs(delay.tau) or change < 1e-18:
            break

    rms = extrapolation_rms(wide, delay, fit)
    logger.info(f"Pipeline finished after {passes} delay passes: tau = {delay.tau * 1e9:.6f} ns, "
                f"extrapolation rms {rms:.3g} rad")
    return PipelineResult(delay=delay, fit=fit, extrapolation_rms=rms, delay_passes=passes)
