"""
CPW transmission-line calculations
Conformal-mapping line parameters, quarter-wave resonances and kinetic-inductance extraction
"""

import logging
import math
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.constants import epsilon_0, mu_0, c as SPEED_OF_LIGHT
from scipy.special import ellipk

from models.cpw import CpwGeometry, LineParams, KiResult, DeviceKiFit
from utils.errors import DomainError, PreconditionError

logger = logging.getLogger(__name__)

# Device-level fits search l_ki in [0, MAX_KI_RATIO * l_geom]
MAX_KI_RATIO = 100.0


def line_params(geom: CpwGeometry) -> LineParams:
    """Per-length parameters of a zero-thickness CPW on a thick substrate"""
    k = geom.center_width / (geom.center_width + 2 * geom.gap)
    if not 0 < k < 1:
        raise DomainError(f"Modulus k={k} outside (0, 1)")

    # scipy's ellipk takes the parameter m = k^2
    k_full = ellipk(k * k)
    k_comp = ellipk(1 - k * k)

    eps_eff = (geom.substrate_eps_r + 1) / 2
    c_per_len = 4 * epsilon_0 * eps_eff * k_full / k_comp
    l_geom = mu_0 * k_comp / (4 * k_full)
    z0 = math.sqrt(l_geom / c_per_len)

    return LineParams(l_geom=l_geom, c_per_len=c_per_len, z0=z0, eps_eff=eps_eff,
                      substrate_eps_r=geom.substrate_eps_r, tan_delta=geom.tan_delta)


def line_from_inductance(l_geom: float, eps_eff: float = (11.7 + 1) / 2) -> LineParams:
    """Line with a given geometric inductance per length and phase velocity c/sqrt(eps_eff)"""
    if l_geom <= 0:
        raise PreconditionError("l_geom must be positive")
    if eps_eff < 1:
        raise PreconditionError("eps_eff must be at least 1")
    c_per_len = eps_eff / (SPEED_OF_LIGHT ** 2 * l_geom)
    return LineParams(l_geom=l_geom, c_per_len=c_per_len,
                      z0=math.sqrt(l_geom / c_per_len), eps_eff=eps_eff,
                      substrate_eps_r=max(2 * eps_eff - 1, 1.0))


def quarter_wave_freq(line: LineParams, length: float, l_ki: float = 0.0) -> float:
    """Fundamental quarter-wave resonance in Hz including kinetic inductance"""
    if not length > 0:
        raise PreconditionError("length must be positive")
    if not l_ki >= 0:
        raise PreconditionError("l_ki must be non-negative")
    return 1.0 / (4 * length * math.sqrt((line.l_geom + l_ki) * line.c_per_len))


def length_for_frequency(line: LineParams, f_target: float, l_ki: float = 0.0) -> float:
    """Quarter-wave length in meters that resonates at f_target"""
    if not f_target > 0:
        raise PreconditionError("f_target must be positive")
    if not l_ki >= 0:
        raise PreconditionError("l_ki must be non-negative")
    return 1.0 / (4 * f_target * math.sqrt((line.l_geom + l_ki) * line.c_per_len))


def extract_lki(f_meas: float, f_model: float, l_geom: float) -> KiResult:
    """Kinetic inductance per length from a measured tone and its geometric-only model tone"""
    if not (f_meas > 0 and f_model > 0):
        raise PreconditionError("Frequencies must be positive")
    if not l_geom > 0:
        raise PreconditionError("l_geom must be positive")
    if f_meas > f_model:
        raise PreconditionError(
            f"Measured tone {f_meas / 1e9:.7f} GHz is above the model tone "
            f"{f_model / 1e9:.7f} GHz; kinetic inductance would be negative")

    l_ki = l_geom * ((f_model / f_meas) ** 2 - 1)
    return KiResult(l_ki=l_ki, freq_ratio=f_meas / f_model,
                    f_model=f_model, f_meas=f_meas, l_geom=l_geom)


def fit_device_lki(pairs: Sequence[Tuple[float, float]], l_geom: float,
                   device_id: str = None) -> DeviceKiFit:
    """Single kinetic inductance for all (f_meas, f_model) tones of a device

    Least squares on the predicted tones f_model*sqrt(l_geom/(l_geom + l_ki)).
    The prediction is linear in s = sqrt(l_geom/(l_geom + l_ki)), so the
    bounded 1D problem is solved exactly in s and mapped back to l_ki.
    """
    if not pairs:
        raise PreconditionError("At least one (f_meas, f_model) pair is required")

    per_tone = [extract_lki(f_meas, f_model, l_geom) for f_meas, f_model in pairs]

    if len(per_tone) == 1:
        tone = per_tone[0]
        return DeviceKiFit(l_ki=tone.l_ki, rms_residual=0.0, l_geom=l_geom,
                           per_tone=per_tone, device_id=device_id)

    f_meas = np.array([tone.f_meas for tone in per_tone])
    f_model = np.array([tone.f_model for tone in per_tone])

    s_min = math.sqrt(1.0 / (1.0 + MAX_KI_RATIO))
    s = float(np.dot(f_model, f_meas) / np.dot(f_model, f_model))
    s = min(max(s, s_min), 1.0)
    l_ki = l_geom * (1.0 / (s * s) - 1.0)

    residual = f_model * s - f_meas
    rms = float(np.sqrt(np.mean(residual ** 2)))

    logger.info(f"Device {device_id or '?'}: L_ki = {l_ki * 1e9:.1f} nH/m over "
                f"{len(per_tone)} tones, rms residual {rms / 1e6:.3f} MHz")
    return DeviceKiFit(l_ki=l_ki, rms_residual=rms, l_geom=l_geom,
                       per_tone=per_tone, device_id=device_id)


def ki_curve(f_model: float, l_geom: float, l_ki_grid: Iterable[float]) -> np.ndarray:
    """Predicted resonance frequency over a grid of kinetic inductances"""
    l_ki_grid = np.asarray(list(l_ki_grid), dtype=float)
    if np.any(l_ki_grid < 0):
        raise PreconditionError("l_ki grid values must be non-negative")
    return f_model * np.sqrt(l_geom / (l_geom + l_ki_grid))
