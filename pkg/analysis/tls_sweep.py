"""
Temperature/power sweep analysis
Q_i surface assembly, TLS regime classification and TLS loss-law fitting
"""

import logging
import math
from typing import Iterable, List, Optional, Union

import numpy as np
from scipy.constants import h as PLANCK, k as BOLTZMANN
from scipy.optimize import least_squares

from models.fit import ResonatorFit
from models.sweep import (QiSurface, RegimeBoundary, RegimeReport, SurfaceComparison,
                          SweepPoint, TlsFit)
from utils.errors import (DuplicateCellError, InsufficientGridError, MixedResonatorError,
                          PreconditionError)

logger = logging.getLogger(__name__)


def _thermal_factor(frequency: float, temperature_mk):
    temperature = np.asarray(temperature_mk, dtype=float) / 1e3
    with np.errstate(divide='ignore'):
        return np.tanh(PLANCK * frequency / (2 * BOLTZMANN * temperature))


def _saturation_factor(power_dbm, p_c_dbm: float, exponent: float):
    power = np.asarray(power_dbm, dtype=float)
    return (1 + 10 ** ((power - p_c_dbm) / 10)) ** (-exponent)


def tls_loss(frequency: float, temperature_mk, power_dbm, f_delta0: float,
             p_c_dbm: float, q_other: float, exponent: float = 0.5):
    """1/Qi = F d0 tanh(hf / 2kT) (1 + P/Pc)^-exponent + 1/Q_other

    Temperature and power broadcast against each other; T = 0 gives tanh = 1.
    """
    return (f_delta0 * _thermal_factor(frequency, temperature_mk)
            * _saturation_factor(power_dbm, p_c_dbm, exponent) + 1.0 / q_other)


def sweep_point(fit: ResonatorFit) -> SweepPoint:
    """Sweep cell from a phase fit carrying temperature and power metadata"""
    meta = fit.meta
    if meta.temperature_mk is None or meta.power_dbm is None:
        raise PreconditionError(
            f"Fit for {meta.device_id} resonator {meta.resonator_index} lacks "
            f"temperature or power metadata")
    q_i = fit.q_i.value if fit.q_i else math.nan
    sigma = fit.q_i.sigma if fit.q_i else math.nan
    return SweepPoint(temperature_mk=float(meta.temperature_mk), power_dbm=float(meta.power_dbm),
                      q_i=q_i, sigma=sigma, q_c=fit.q_c.value, f0=fit.f0.value,
                      device_id=meta.device_id, resonator_index=meta.resonator_index)


def aggregate(fits: Iterable[Union[ResonatorFit, SweepPoint]]) -> QiSurface:
    """Assemble fits or sweep points of one resonator into a Q_i surface"""
    points = [item if isinstance(item, SweepPoint) else sweep_point(item) for item in fits]
    if not points:
        raise PreconditionError("No fits to aggregate")

    identities = {(p.device_id, p.resonator_index) for p in points}
    if len(identities) > 1:
        raise MixedResonatorError(
            f"Fits from {len(identities)} resonators cannot share one surface: "
            f"{sorted(identities)}")
    device_id, resonator_index = identities.pop()

    temperatures = sorted({p.temperature_mk for p in points})
    powers = sorted({p.power_dbm for p in points})
    row = {t: i for i, t in enumerate(temperatures)}
    col = {p: j for j, p in enumerate(powers)}

    q_i = np.full((len(temperatures), len(powers)), np.nan)
    sigma = np.full_like(q_i, np.nan)
    filled = np.zeros(q_i.shape, dtype=bool)
    for point in points:
        i, j = row[point.temperature_mk], col[point.power_dbm]
        if filled[i, j]:
            raise DuplicateCellError(
                f"Two fits at {point.temperature_mk} mK, {point.power_dbm} dBm",
                {'temperature_mk': point.temperature_mk, 'power_dbm': point.power_dbm})
        filled[i, j] = True
        q_i[i, j] = point.q_i
        sigma[i, j] = point.sigma

    frequencies = [p.f0 for p in points if p.f0 is not None]
    frequency = float(np.median(frequencies)) if frequencies else None

    surface = QiSurface(device_id, resonator_index, temperatures, powers, q_i, sigma,
                        frequency=frequency)
    logger.info(f"Aggregated {len(points)} fits into a {surface.shape[0]}x{surface.shape[1]} "
                f"surface for {device_id} resonator {resonator_index} "
                f"({surface.absent_cells} absent cells)")
    return surface


def _crossing(temperatures: np.ndarray, log_spread: np.ndarray, level: float) -> Optional[float]:
    """First temperature, scanning upward, where log_spread falls through level"""
    valid = np.isfinite(log_spread)
    t, g = temperatures[valid], log_spread[valid]
    for i in range(len(t) - 1):
        if g[i] >= level > g[i + 1]:
            return float(t[i] + (level - g[i]) * (t[i + 1] - t[i]) / (g[i + 1] - g[i]))
    return None


def classify_regimes(surface: QiSurface, eps_sat: float = 0.05, eps_dep: float = 0.2,
                     plateau_tolerance: float = 0.1) -> RegimeReport:
    """Label each temperature row by the spread of Q_i over power

    saturated: spread below 1 + eps_sat. power_dependent: spread at least
    1 + eps_dep. tls_dominated: power_dependent, Q_i rising with power and a
    log-spread within plateau_tolerance of the coldest row's.
    """
    n_temperatures, n_powers = surface.shape
    if n_temperatures < 3 or n_powers < 2:
        raise InsufficientGridError(
            f"Regime classification needs at least 3 temperatures and 2 powers, "
            f"got {n_temperatures}x{n_powers}")
    if not 0 < eps_sat < eps_dep:
        raise PreconditionError("Thresholds must satisfy 0 < eps_sat < eps_dep")

    notes = []
    spread = []
    rising = []
    for i, values in enumerate(surface.q_i):
        finite = values[np.isfinite(values)]
        if finite.size < 2:
            notes.append(f"Row {surface.temperatures[i]:g} mK has fewer than 2 present cells")
            spread.append(math.nan)
            rising.append(False)
            continue
        spread.append(float(finite.max() / finite.min()))
        rising.append(bool(np.all(np.diff(finite) > 0)))

    coldest = next((s for s in spread if math.isfinite(s)), math.nan)
    labels = []
    for s, is_rising in zip(spread, rising):
        if not math.isfinite(s):
            labels.append('unclassified')
        elif s < 1 + eps_sat:
            labels.append('saturated')
        elif s >= 1 + eps_dep:
            plateau = abs(math.log(s) - math.log(coldest)) <= plateau_tolerance * math.log(coldest)
            labels.append('tls_dominated' if is_rising and plateau else 'power_dependent')
        else:
            labels.append('unclassified')

    log_q = np.log(surface.q_i)
    boundaries = []
    for j, power in enumerate(surface.powers[:-1]):
        log_spread = log_q[:, -1] - log_q[:, j]
        boundaries.append(RegimeBoundary(
            power_dbm=float(power),
            dependent_mk=_crossing(surface.temperatures, log_spread, math.log(1 + eps_dep)),
            saturated_mk=_crossing(surface.temperatures, log_spread, math.log(1 + eps_sat))))

    monotonicity = {}
    for j, power in enumerate(surface.powers):
        column = surface.q_i[:, j]
        column = column[np.isfinite(column)]
        monotonicity[f"{power:g}"] = bool(np.all(np.diff(column) >= 0))

    if surface.absent_cells:
        notes.append(f"{surface.absent_cells} absent cells ignored")
    unclassified = labels.count('unclassified')
    if unclassified:
        logger.warning(f"{unclassified} of {n_temperatures} temperature rows are unclassified")

    logger.info(f"Classified {surface.device_id} resonator {surface.resonator_index}: "
                + ", ".join(f"{label}={labels.count(label)}" for label in sorted(set(labels))))
    return RegimeReport(row_labels=labels, spread=spread, boundaries=boundaries,
                        monotonicity_flags=monotonicity, notes=notes,
                        eps_sat=eps_sat, eps_dep=eps_dep)


def fit_tls_law(surface: QiSurface, frequency: Optional[float] = None,
                exponent: float = 0.5) -> TlsFit:
    """Least-squares fit of the TLS loss law to a Q_i surface on log residuals

    Loss terms are fitted in units of the median loss with F d0 >= 0 and
    1/Q_other >= 0; the critical power is started at every grid power and
    the lowest-cost solution kept.
    """
    n_temperatures, n_powers = surface.shape
    if n_temperatures < 3 or n_powers < 3:
        raise InsufficientGridError(
            f"The TLS law fit needs at least 3 temperatures and 3 powers, "
            f"got {n_temperatures}x{n_powers}")
    frequency = frequency or surface.frequency
    if not frequency or frequency <= 0:
        raise PreconditionError("A resonance frequency is required for the TLS law")

    temperature, power = np.meshgrid(surface.temperatures, surface.powers, indexing='ij')
    present = np.isfinite(surface.q_i) & (surface.q_i > 0)
    temperature, power = temperature[present], power[present]
    loss = 1.0 / surface.q_i[present]
    unit = float(np.median(loss))
    log_loss = np.log(loss)
    thermal = _thermal_factor(frequency, temperature)

    # x = (F d0 / unit, P_c in dBm, (1/Q_other) / unit)
    def residuals(x):
        model = unit * (x[0] * thermal * _saturation_factor(power, x[1], exponent) + x[2])
        return np.log(np.maximum(model, 1e-300)) - log_loss

    span = float(surface.powers[-1] - surface.powers[0])
    bounds = ([0.0, surface.powers[0] - span - 40, 0.0],
              [np.inf, surface.powers[-1] + span + 40, np.inf])
    floor = float(loss.min()) / unit
    excess = max(float(loss.max()) / unit - floor, 1e-6)

    best = None
    for p_c_start in surface.powers:
        start = [excess, float(p_c_start), 0.9 * floor]
        try:
            result = least_squares(residuals, start, bounds=bounds, jac='3-point',
                                   ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=5000)
        except ValueError as e:
            logger.debug(f"Start at P_c={p_c_start:g} dBm failed: {e}")
            continue
        if best is None or result.cost < best.cost:
            best = result

    if best is None:
        return TlsFit(f_delta0=math.nan, p_c_dbm=math.nan, q_other=math.nan, rms=math.nan,
                      converged=False, frequency=frequency, exponent=exponent,
                      message='every start failed')

    f_delta0 = float(best.x[0] * unit)
    q_other = float(1.0 / (best.x[2] * unit)) if best.x[2] > 0 else math.inf
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    converged = bool(best.success and np.all(np.isfinite(best.x)) and math.isfinite(rms))

    fit = TlsFit(f_delta0=f_delta0, p_c_dbm=float(best.x[1]), q_other=q_other, rms=rms,
                 converged=converged, frequency=frequency, exponent=exponent,
                 message=best.message)
    if converged:
        logger.info(f"TLS law: F d0 = {f_delta0:.4g}, P_c = {fit.p_c_dbm:.2f} dBm, "
                    f"Q_other = {q_other:.4g}, log rms {rms:.3g}")
    else:
        logger.warning(f"TLS law fit did not converge: {best.message}")
    return fit


def compare_surfaces(a: QiSurface, b: QiSurface, label_a: str = 'a',
                     label_b: str = 'b') -> SurfaceComparison:
    """Q_i of two surfaces on the (temperature, power) cells present in both"""
    cells = []
    lookup = {(float(t), float(p)): b.q_i[i, j]
              for i, t in enumerate(b.temperatures) for j, p in enumerate(b.powers)}
    for i, temperature in enumerate(a.temperatures):
        for j, power in enumerate(a.powers):
            q_a = a.q_i[i, j]
            q_b = lookup.get((float(temperature), float(power)), np.nan)
            if not (np.isfinite(q_a) and np.isfinite(q_b)):
                continue
            cells.append({'temperature_mk': float(temperature), 'power_dbm': float(power),
                          'q_i_a': float(q_a), 'q_i_b': float(q_b),
                          'ratio': float(q_b / q_a)})

    if not cells:
        raise PreconditionError(f"Surfaces {label_a} and {label_b} share no present cells")

    median_ratio = float(np.median([cell['ratio'] for cell in cells]))
    logger.info(f"Compared {label_a} and {label_b} on {len(cells)} cells: "
                f"median Q_i ratio {median_ratio:.3f}")
    return SurfaceComparison(label_a=label_a, label_b=label_b, cells=cells,
                             median_ratio=median_ratio)
