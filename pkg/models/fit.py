"""
Fit Result Models
Delay fits, phase-fit configuration and resonator fit results with 1-sigma uncertainties
"""

from dataclasses import dataclass, field
from typing import Optional, Dict, List, Tuple
import math

import numpy as np

from models.notch import NotchParams
from models.trace import Band, TraceMeta
from utils.errors import PreconditionError
from utils.formatting import format_uncertainty
from utils.validators import AnalysisValidator

_validator = AnalysisValidator()


@dataclass(frozen=True)
class Estimate:
    value: float
    sigma: float = math.nan

    def __str__(self) -> str:
        return format_uncertainty(self.value, self.sigma)


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    relative_tolerance: float = 1e-10
    damping_init: float = 1e-3
    # per-parameter (min, max) in natural units; keys f0, q_total, q_c, delta_omega, phi0
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        result = _validator.validate_fit_config(self.max_iterations, self.relative_tolerance,
                                                self.damping_init, self.bounds)
        if not result['valid']:
            raise PreconditionError("; ".join(result['errors']))

    @classmethod
    def from_settings(cls, settings) -> 'FitConfig':
        return cls(max_iterations=settings.max_iterations,
                   relative_tolerance=settings.relative_tolerance,
                   damping_init=settings.damping_init)


@dataclass(frozen=True)
class DelayFit:
    tau: float                 # s
    phase_intercept: float     # rad, background phase extrapolated to 0 Hz
    excluded_band: Band
    rms_residual: float        # rad
    n_used: int = 0
    background_order: int = 1
    reference_freq: float = 0.0  # Hz, expansion point of the background polynomial
    coefficients: Tuple[float, ...] = ()

    def background(self, freq):
        """Fitted background phase at freq (rad)"""
        return np.polyval(self.coefficients, np.asarray(freq, dtype=float) - self.reference_freq)


@dataclass(frozen=True)
class ResonatorFit:
    f0: Estimate
    q_total: Estimate
    q_c: Estimate
    delta_omega: Estimate
    phi0: Estimate
    q_i: Optional[Estimate]
    rms_residual: float
    n_iterations: int
    converged: bool
    fit_band: Band
    meta: TraceMeta = field(default_factory=TraceMeta)
    covariance: List[List[float]] = field(default_factory=list)
    message: str = ''

    def as_notch_params(self) -> NotchParams:
        """Rebuild synthesis parameters from the fitted values"""
        return NotchParams(f0=self.f0.value, q_total=self.q_total.value, q_c=self.q_c.value,
                           delta_omega=self.delta_omega.value, phi0=self.phi0.value)

    def summary(self) -> str:
        """Human-readable one-line summary (GHz, parenthetical uncertainties)"""
        f0 = format_uncertainty(self.f0.value / 1e9, self.f0.sigma / 1e9)
        q_i = str(self.q_i) if self.q_i else 'n/a'
        state = 'converged' if self.converged else 'NOT converged'
        return (f"f0={f0} GHz  Q={self.q_total}  Qc={self.q_c}  Qi={q_i}  "
                f"rms={self.rms_residual:.3g} rad  ({state}, {self.n_iterations} iterations)")


@dataclass(frozen=True)
class PipelineResult:
    delay: DelayFit
    fit: ResonatorFit
    extrapolation_rms: float   # rad, fitted model against the corrected wide scan
    delay_passes: int = 1
