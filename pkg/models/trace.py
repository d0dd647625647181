"""
Trace Model for the resonator analysis toolkit
Frequency-sampled S21 records, scan windows and the utilities every analysis step consumes
"""

from dataclasses import dataclass, asdict, field, replace
from typing import Optional, Dict, Any
import json

import numpy as np

from utils.errors import (TraceValidationError, EmptyWindowError,
                          InsufficientSamplesError)
from utils.validators import AnalysisValidator

_validator = AnalysisValidator()


@dataclass(frozen=True)
class TraceMeta:
    device_id: str = 'unknown'
    resonator_index: int = 1      # design position 1-4
    power_dbm: Optional[float] = None
    temperature_mk: Optional[float] = None
    coupling: str = 'unknown'     # inductive, capacitive, unknown
    scan_kind: str = 'full'       # wide, narrow, full

    def __post_init__(self):
        result = _validator.validate_meta(self.resonator_index, self.temperature_mk,
                                          self.coupling, self.scan_kind, self.device_id)
        if not result['valid']:
            raise TraceValidationError("; ".join(result['errors']))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TraceMeta':
        """Create TraceMeta from dictionary"""
        valid_fields = {'device_id', 'resonator_index', 'power_dbm', 'temperature_mk',
                        'coupling', 'scan_kind'}
        meta_data = {k: v for k, v in data.items() if k in valid_fields}
        if 'resonator_index' in meta_data:
            meta_data['resonator_index'] = int(meta_data['resonator_index'])
        return cls(**meta_data)

    def to_dict(self) -> Dict[str, Any]:
        """Convert TraceMeta to dictionary"""
        return asdict(self)

    def to_json(self) -> str:
        """Convert TraceMeta to JSON string"""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_scan_kind(self, scan_kind: str) -> 'TraceMeta':
        return replace(self, scan_kind=scan_kind)

    def same_resonator(self, other: 'TraceMeta') -> bool:
        """Check whether two records describe the same physical resonator"""
        return (self.device_id == other.device_id
                and self.resonator_index == other.resonator_index)


@dataclass(frozen=True)
class Band:
    center: float  # Hz
    span: float    # Hz

    def __post_init__(self):
        result = _validator.validate_band(self.center, self.span)
        if not result['valid']:
            raise TraceValidationError("; ".join(result['errors']))

    @classmethod
    def from_edges(cls, lo: float, hi: float) -> 'Band':
        return cls(center=(lo + hi) / 2, span=hi - lo)

    @property
    def lo(self) -> float:
        return self.center - self.span / 2

    @property
    def hi(self) -> float:
        return self.center + self.span / 2

    def contains(self, freq: np.ndarray) -> np.ndarray:
        """Boolean mask of frequencies inside the closed band"""
        freq = np.asarray(freq, dtype=float)
        return (freq >= self.lo) & (freq <= self.hi)

    def scaled(self, factor: float) -> 'Band':
        """Same center, span multiplied by factor"""
        return Band(center=self.center, span=self.span * factor)

    def overlaps(self, other: 'Band') -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def __str__(self) -> str:
        return f"Band(center={self.center / 1e9:.7f} GHz, span={self.span:.6g} Hz)"


@dataclass(frozen=True, eq=False)
class Trace:
    """Immutable S21 record: strictly increasing Hz frequencies and complex linear S21"""

    freq: np.ndarray
    s21: np.ndarray
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __post_init__(self):
        freq = np.array(self.freq, dtype=np.float64)
        s21 = np.array(self.s21, dtype=np.complex128)

        result = _validator.validate_trace_arrays(freq, s21)
        if not result['valid']:
            raise TraceValidationError("; ".join(result['errors']))

        freq.setflags(write=False)
        s21.setflags(write=False)
        object.__setattr__(self, 'freq', freq)
        object.__setattr__(self, 's21', s21)

    def __len__(self) -> int:
        return len(self.freq)

    @property
    def band(self) -> Band:
        """Band covering the sampled frequency range"""
        return Band.from_edges(float(self.freq[0]), float(self.freq[-1]))

    def window(self, band: Band) -> 'Trace':
        """Sub-trace whose frequencies lie inside the closed band"""
        mask = band.contains(self.freq)
        count = int(np.count_nonzero(mask))
        if count == 0:
            raise EmptyWindowError(f"No samples of {self} fall inside {band}")
        if count < AnalysisValidator.MIN_TRACE_POINTS:
            raise InsufficientSamplesError(
                f"Only {count} samples fall inside {band}; a trace needs "
                f"{AnalysisValidator.MIN_TRACE_POINTS}")
        return Trace(self.freq[mask], self.s21[mask], self.meta)

    def unwrap_phase(self) -> np.ndarray:
        """Continuous phase in radians, anchored at arg(s21[0]) in (-pi, pi]"""
        angle = np.angle(self.s21)
        # arg of -1 - 0j is -pi
        angle[angle == -np.pi] = np.pi
        return np.unwrap(angle)

    def magnitude_db(self) -> np.ndarray:
        return 20 * np.log10(np.abs(self.s21))

    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.s21))

    def with_s21(self, s21: np.ndarray) -> 'Trace':
        """New trace on the same frequencies and metadata"""
        return Trace(self.freq, s21, self.meta)

    def with_meta(self, meta: TraceMeta) -> 'Trace':
        return Trace(self.freq, self.s21, meta)

    def __str__(self) -> str:
        return (f"Trace(device='{self.meta.device_id}', resonator={self.meta.resonator_index}, "
                f"{len(self)} points, {self.freq[0] / 1e9:.7f}-{self.freq[-1] / 1e9:.7f} GHz)")

    def __repr__(self) -> str:
        return self.__str__()


def window(trace: Trace, band: Band) -> Trace:
    """Sub-trace of trace inside band"""
    return trace.window(band)


def unwrap_phase(trace: Trace) -> np.ndarray:
    """Continuous phase of trace in radians"""
    return trace.unwrap_phase()
