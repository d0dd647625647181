"""
Temperature/power sweep models
Q_i surfaces over (temperature, power), regime reports, TLS law fits and surface comparisons
"""

from dataclasses import dataclass, field
from typing import Optional, Dict, List
import math

import numpy as np

from utils.errors import PreconditionError

REGIMES = ('tls_dominated', 'power_dependent', 'saturated', 'unclassified')


@dataclass(frozen=True)
class SweepPoint:
    """One (temperature, power) cell of a sweep"""

    temperature_mk: float
    power_dbm: float
    q_i: float
    sigma: float = math.nan
    q_c: Optional[float] = None
    f0: Optional[float] = None
    device_id: str = 'unknown'
    resonator_index: int = 1


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class QiSurface:
    """Q_i over a temperature x power grid for one resonator; NaN marks absent cells"""

    device_id: str
    resonator_index: int
    temperatures: np.ndarray      # mK, strictly increasing
    powers: np.ndarray            # dBm, strictly increasing
    q_i: np.ndarray               # shape (len(temperatures), len(powers))
    sigma: Optional[np.ndarray] = None
    regime: Optional[np.ndarray] = None
    frequency: Optional[float] = None   # Hz

    def __post_init__(self):
        temperatures = _frozen_array(self.temperatures)
        powers = _frozen_array(self.powers)
        q_i = _frozen_array(self.q_i)
        shape = (temperatures.size, powers.size)

        if temperatures.ndim != 1 or powers.ndim != 1:
            raise PreconditionError("Surface axes must be one-dimensional")
        if q_i.shape != shape:
            raise PreconditionError(f"q_i grid has shape {q_i.shape}, axes imply {shape}")
        if np.any(np.diff(temperatures) <= 0) or np.any(np.diff(powers) <= 0):
            raise PreconditionError("Surface axes must be strictly increasing")

        sigma = self.sigma
        sigma = _frozen_array(np.full(shape, np.nan) if sigma is None else sigma)
        if sigma.shape != shape:
            raise PreconditionError(f"sigma grid has shape {sigma.shape}, axes imply {shape}")

        regime = self.regime
        regime = _frozen_array(np.full(shape, 'unclassified') if regime is None else regime,
                               dtype=object)
        if regime.shape != shape:
            raise PreconditionError(f"regime grid has shape {regime.shape}, axes imply {shape}")

        object.__setattr__(self, 'temperatures', temperatures)
        object.__setattr__(self, 'powers', powers)
        object.__setattr__(self, 'q_i', q_i)
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'regime', regime)

    @property
    def shape(self):
        return self.q_i.shape

    @property
    def absent_cells(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.q_i)))

    def with_regimes(self, row_labels: List[str]) -> 'QiSurface':
        """Copy with every cell of a temperature row carrying that row's regime label"""
        regime = np.repeat(np.array(row_labels, dtype=object)[:, None], self.powers.size, axis=1)
        return QiSurface(self.device_id, self.resonator_index, self.temperatures, self.powers,
                         self.q_i, self.sigma, regime, self.frequency)

    def disaggregate(self) -> List[SweepPoint]:
        """Present cells as sweep points, temperature-major"""
        points = []
        for i, temperature in enumerate(self.temperatures):
            for j, power in enumerate(self.powers):
                if not np.isfinite(self.q_i[i, j]):
                    continue
                points.append(SweepPoint(temperature_mk=float(temperature),
                                         power_dbm=float(power),
                                         q_i=float(self.q_i[i, j]),
                                         sigma=float(self.sigma[i, j]),
                                         f0=self.frequency,
                                         device_id=self.device_id,
                                         resonator_index=self.resonator_index))
        return points


@dataclass(frozen=True)
class RegimeBoundary:
    """Temperatures (mK) where the spread against the top power crosses each threshold"""

    power_dbm: float
    dependent_mk: Optional[float] = None
    saturated_mk: Optional[float] = None


@dataclass(frozen=True)
class RegimeReport:
    row_labels: List[str]
    spread: List[float]                      # max_P Qi / min_P Qi per temperature row
    boundaries: List[RegimeBoundary]
    monotonicity_flags: Dict[str, bool]      # keyed by power in dBm, Qi non-decreasing in T
    notes: List[str] = field(default_factory=list)
    eps_sat: float = 0.05
    eps_dep: float = 0.2


@dataclass(frozen=True)
class TlsFit:
    f_delta0: float
    p_c_dbm: float
    q_other: float
    rms: float              # rms of log residuals
    converged: bool
    frequency: float        # Hz
    exponent: float = 0.5
    message: str = ''


@dataclass(frozen=True)
class SurfaceComparison:
    """Side-by-side Q_i of two surfaces on their common cells"""

    label_a: str
    label_b: str
    cells: List[Dict[str, float]]
    median_ratio: float     # median of Qi_b / Qi_a
