"""
CPW Line Models
Geometry, per-length line parameters and kinetic-inductance results
"""

from dataclasses import dataclass, asdict, field
from typing import Dict, Any, List, Optional
import math

from scipy.constants import c as SPEED_OF_LIGHT

from utils.errors import DomainError
from utils.validators import AnalysisValidator

_validator = AnalysisValidator()


@dataclass(frozen=True)
class CpwGeometry:
    center_width: float             # m
    gap: float                      # m
    substrate_eps_r: float = 11.7
    tan_delta: float = 0.0

    def __post_init__(self):
        result = _validator.validate_geometry(self.center_width, self.gap,
                                              self.substrate_eps_r, self.tan_delta)
        if not result['valid']:
            raise DomainError("; ".join(result['errors']))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CpwGeometry':
        valid_fields = {'center_width', 'gap', 'substrate_eps_r', 'tan_delta'}
        return cls(**{k: float(v) for k, v in data.items() if k in valid_fields})


@dataclass(frozen=True)
class LineParams:
    l_geom: float      # H/m
    c_per_len: float   # F/m
    z0: float          # ohm
    eps_eff: float
    substrate_eps_r: float = 11.7
    tan_delta: float = 0.0

    @property
    def phase_velocity(self) -> float:
        """m/s, equal to 1/sqrt(L C) for the geometric line"""
        return SPEED_OF_LIGHT / math.sqrt(self.eps_eff)

    def loss_per_length(self, freq: float) -> float:
        """Dielectric attenuation in Np/m at freq, using the substrate filling factor"""
        if self.tan_delta == 0 or self.substrate_eps_r == 1:
            return 0.0
        filling = (self.eps_eff - 1) / (self.substrate_eps_r - 1)
        return math.pi * freq * math.sqrt(self.eps_eff) * filling * self.tan_delta / SPEED_OF_LIGHT

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def __str__(self) -> str:
        return (f"LineParams(L={self.l_geom * 1e9:.2f} nH/m, C={self.c_per_len * 1e12:.2f} pF/m, "
                f"Z0={self.z0:.2f} ohm, eps_eff={self.eps_eff:.3f})")


@dataclass(frozen=True)
class KiResult:
    l_ki: float         # H/m
    freq_ratio: float   # f_meas / f_model
    f_model: float      # Hz
    f_meas: float       # Hz
    l_geom: float       # H/m

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DeviceKiFit:
    """Single kinetic inductance fitted over all observed tones of one device"""

    l_ki: float
    rms_residual: float        # Hz
    l_geom: float
    per_tone: List[KiResult] = field(default_factory=list)
    device_id: Optional[str] = None

    def predicted(self) -> List[float]:
        """Predicted measured frequencies at the fitted l_ki"""
        scale = math.sqrt(self.l_geom / (self.l_geom + self.l_ki))
        return [tone.f_model * scale for tone in self.per_tone]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
