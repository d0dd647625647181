"""
Notch Resonator Model parameters
Hanger-type resonator parameter set plus synthesis controls
"""

from dataclasses import dataclass, asdict, replace
from typing import Optional, Dict, Any

from utils.errors import PreconditionError
from utils.validators import AnalysisValidator

_validator = AnalysisValidator()


@dataclass(frozen=True)
class NotchParams:
    f0: float                  # Hz
    q_total: float
    q_c: float
    delta_omega: float = 0.0   # Hz, asymmetry from feed-line impedance mismatch
    phi0: float = 0.0          # rad
    delay: float = 0.0         # s
    amp: float = 1.0

    def __post_init__(self):
        result = _validator.validate_notch_params(self.f0, self.q_total, self.q_c,
                                                  self.delta_omega, self.phi0,
                                                  self.delay, self.amp)
        if not result['valid']:
            raise PreconditionError("; ".join(result['errors']))

    @property
    def linewidth(self) -> float:
        """Full width at half maximum in Hz (f0 / Q)"""
        return self.f0 / self.q_total

    @property
    def q_i(self) -> Optional[float]:
        """Internal quality factor; None for a lossless resonator"""
        if self.q_c <= self.q_total:
            return None
        return 1.0 / (1.0 / self.q_total - 1.0 / self.q_c)

    def lossless(self) -> 'NotchParams':
        """Coupling-limited copy (Q_i -> infinity)"""
        return replace(self, q_total=self.q_c)

    def __str__(self) -> str:
        return (f"NotchParams(f0={self.f0 / 1e9:.7f} GHz, Q={self.q_total:.4g}, "
                f"Qc={self.q_c:.4g}, dw={self.delta_omega:.4g} Hz)")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0  # per quadrature
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0):
            raise PreconditionError("Noise sigma must be non-negative")


@dataclass(frozen=True)
class LinewidthResult:
    """Outcome of the adaptive linewidth refinement"""

    q_c: float
    fwhm: float      # Hz
    levels: int
    step: float      # Hz, final grid spacing
    f0: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
