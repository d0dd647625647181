"""
Reference device tones
Measured resonance tones of the characterized devices and the design-position constants
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import pandas as pd
from uncertainties import ufloat_fromstr

from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')

# Geometric inductance per length of the design CPW (conformal mapping), H/m
GEOMETRIC_INDUCTANCE = 410e-9


@dataclass(frozen=True)
class DesignPosition:
    position: int
    coupling: str
    f_model: float      # Hz, eigenfrequency without kinetic inductance
    q_c_sim: float      # simulated coupling Q


@dataclass(frozen=True)
class ReferenceTone:
    device_id: str
    position: int
    f_meas: float       # Hz
    sigma: float        # Hz
    f_model: float      # Hz
    coupling: str
    power_dbm: float
    temperature_mk: float


class ReferenceTones:
    """Loads the shipped tone tables; measured values keep their last-digit uncertainty"""

    def __init__(self, data_dir: str = DATA_DIR):
        self.data_dir = data_dir
        self._positions: Optional[Dict[int, DesignPosition]] = None
        self._tones: Optional[List[ReferenceTone]] = None

    def positions(self) -> Dict[int, DesignPosition]:
        """Design positions keyed by index 1-4"""
        if self._positions is None:
            frame = pd.read_csv(os.path.join(self.data_dir, 'design_positions.csv'))
            self._positions = {
                int(row.position): DesignPosition(position=int(row.position),
                                                  coupling=row.coupling,
                                                  f_model=float(row.f_model_ghz) * 1e9,
                                                  q_c_sim=float(row.q_c_sim))
                for row in frame.itertuples(index=False)
            }
        return self._positions

    def tones(self, device_id: Optional[str] = None) -> List[ReferenceTone]:
        """Measured tones, optionally for one device, ordered by device then position"""
        if self._tones is None:
            positions = self.positions()
            frame = pd.read_csv(os.path.join(self.data_dir, 'device_tones.csv'),
                                dtype={'device': str, 'f_meas_ghz': str})
            tones = []
            for row in frame.itertuples(index=False):
                measured = ufloat_fromstr(row.f_meas_ghz)
                design = positions[int(row.position)]
                tones.append(ReferenceTone(device_id=row.device, position=int(row.position),
                                           f_meas=measured.nominal_value * 1e9,
                                           sigma=measured.std_dev * 1e9,
                                           f_model=design.f_model, coupling=design.coupling,
                                           power_dbm=float(row.power_dbm),
                                           temperature_mk=float(row.temperature_mk)))
            self._tones = sorted(tones, key=lambda t: (t.device_id, t.position))
            logger.debug(f"Loaded {len(self._tones)} reference tones from {self.data_dir}")

        if device_id is None:
            return list(self._tones)

        selected = [t for t in self._tones if t.device_id == device_id]
        if not selected:
            raise PreconditionError(
                f"No reference tones for device '{device_id}'; known devices: "
                f"{', '.join(self.devices())}")
        return selected

    def devices(self) -> List[str]:
        return sorted({t.device_id for t in self.tones()})

    def pairs(self, device_id: str) -> List[Tuple[float, float]]:
        """(f_meas, f_model) pairs in Hz for one device"""
        return [(t.f_meas, t.f_model) for t in self.tones(device_id)]
