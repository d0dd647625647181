"""
Result file storage
Versioned JSON result documents whose numbers always carry units, with input provenance
"""

import hashlib
import json
import logging
import math
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional

from config import TOOL_NAME, TOOL_VERSION
from models.cpw import CpwGeometry, DeviceKiFit, KiResult, LineParams
from models.fit import DelayFit, Estimate, ResonatorFit
from models.sweep import QiSurface, RegimeReport, SurfaceComparison, TlsFit
from models.trace import Band, TraceMeta
from utils.errors import SchemaError
from utils.formatting import quantity
from utils.validators import AnalysisValidator

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_COVARIANCE_UNIT = 'outer product of (Hz, 1, 1, Hz, rad)'


def _clean(value):
    """NaN and infinity become null so documents stay strict JSON"""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


def _q(value, unit: str) -> Dict[str, Any]:
    record = quantity(value, unit)
    record['value'] = _clean(record['value'])
    return record


def _estimate(estimate: Optional[Estimate], unit: str) -> Optional[Dict[str, Any]]:
    if estimate is None:
        return None
    record = _q(estimate.value, unit)
    record['sigma'] = _clean(estimate.sigma)
    return record


def _value(record: Optional[Dict[str, Any]], default=None):
    if record is None or record.get('value') is None:
        return default
    return record['value']


def _band(band: Band) -> Dict[str, Any]:
    return {'center': _q(band.center, 'Hz'), 'span': _q(band.span, 'Hz')}


def _band_from(record: Dict[str, Any]) -> Band:
    return Band(center=_value(record['center']), span=_value(record['span']))


def _meta(meta: TraceMeta) -> Dict[str, Any]:
    return {
        'device_id': meta.device_id,
        'resonator_index': _q(meta.resonator_index, '1'),
        'power_dbm': None if meta.power_dbm is None else _q(meta.power_dbm, 'dBm'),
        'temperature_mk': None if meta.temperature_mk is None else _q(meta.temperature_mk, 'mK'),
        'coupling': meta.coupling,
        'scan_kind': meta.scan_kind,
    }


def _meta_from(record: Dict[str, Any]) -> TraceMeta:
    return TraceMeta(device_id=record['device_id'],
                     resonator_index=int(_value(record['resonator_index'])),
                     power_dbm=_value(record.get('power_dbm')),
                     temperature_mk=_value(record.get('temperature_mk')),
                     coupling=record['coupling'],
                     scan_kind=record['scan_kind'])


def _grid(rows) -> List[List[Optional[float]]]:
    return [[_clean(float(v)) for v in row] for row in rows]


# Record builders

def resonator_fit_record(fit: ResonatorFit) -> Dict[str, Any]:
    return {
        'type': 'ResonatorFit',
        'f0': _estimate(fit.f0, 'Hz'),
        'q_total': _estimate(fit.q_total, '1'),
        'q_c': _estimate(fit.q_c, '1'),
        'delta_omega': _estimate(fit.delta_omega, 'Hz'),
        'phi0': _estimate(fit.phi0, 'rad'),
        'q_i': _estimate(fit.q_i, '1'),
        'rms_residual': _q(fit.rms_residual, 'rad'),
        'n_iterations': _q(fit.n_iterations, '1'),
        'converged': fit.converged,
        'message': fit.message,
        'fit_band': _band(fit.fit_band),
        'meta': _meta(fit.meta),
        'covariance': _q(_grid(fit.covariance), _COVARIANCE_UNIT),
    }


def resonator_fit_from_record(record: Dict[str, Any]) -> ResonatorFit:
    """Rebuild a ResonatorFit from its result-file record"""
    def estimate(key):
        entry = record.get(key)
        if entry is None:
            return None
        sigma = entry.get('sigma')
        return Estimate(float(entry['value']), math.nan if sigma is None else float(sigma))

    covariance = _value(record.get('covariance'), [])
    return ResonatorFit(f0=estimate('f0'), q_total=estimate('q_total'), q_c=estimate('q_c'),
                        delta_omega=estimate('delta_omega'), phi0=estimate('phi0'),
                        q_i=estimate('q_i'),
                        rms_residual=float(_value(record['rms_residual'])),
                        n_iterations=int(_value(record['n_iterations'])),
                        converged=bool(record['converged']),
                        fit_band=_band_from(record['fit_band']),
                        meta=_meta_from(record['meta']),
                        covariance=[[math.nan if v is None else v for v in row] for row in covariance],
                        message=record.get('message', ''))


def delay_fit_record(delay: DelayFit) -> Dict[str, Any]:
    return {
        'type': 'DelayFit',
        'tau': _q(delay.tau, 's'),
        'phase_intercept': _q(delay.phase_intercept, 'rad'),
        'excluded_band': _band(delay.excluded_band),
        'rms_residual': _q(delay.rms_residual, 'rad'),
        'n_used': _q(delay.n_used, '1'),
        'background_order': _q(delay.background_order, '1'),
        'reference_freq': _q(delay.reference_freq, 'Hz'),
        'coefficients': _q(list(delay.coefficients), 'rad/Hz^k, highest power first'),
    }


def ki_result_record(result: KiResult, device_id: Optional[str] = None,
                     position: Optional[int] = None) -> Dict[str, Any]:
    record = {
        'type': 'KiResult',
        'l_ki': _q(result.l_ki, 'H/m'),
        'freq_ratio': _q(result.freq_ratio, '1'),
        'f_model': _q(result.f_model, 'Hz'),
        'f_meas': _q(result.f_meas, 'Hz'),
        'l_geom': _q(result.l_geom, 'H/m'),
    }
    if device_id is not None:
        record['device_id'] = device_id
    if position is not None:
        record['position'] = _q(position, '1')
    return record


def device_ki_record(fit: DeviceKiFit) -> Dict[str, Any]:
    return {
        'type': 'DeviceKiFit',
        'device_id': fit.device_id,
        'l_ki': _q(fit.l_ki, 'H/m'),
        'rms_residual': _q(fit.rms_residual, 'Hz'),
        'l_geom': _q(fit.l_geom, 'H/m'),
        'n_tones': _q(len(fit.per_tone), '1'),
        'predicted': _q(fit.predicted(), 'Hz'),
    }


def line_params_record(line: LineParams, geometry: Optional[CpwGeometry] = None) -> Dict[str, Any]:
    record = {
        'type': 'LineParams',
        'l_geom': _q(line.l_geom, 'H/m'),
        'c_per_len': _q(line.c_per_len, 'F/m'),
        'z0': _q(line.z0, 'ohm'),
        'eps_eff': _q(line.eps_eff, '1'),
        'phase_velocity': _q(line.phase_velocity, 'm/s'),
    }
    if geometry is not None:
        record['geometry'] = {
            'center_width': _q(geometry.center_width, 'm'),
            'gap': _q(geometry.gap, 'm'),
            'substrate_eps_r': _q(geometry.substrate_eps_r, '1'),
            'tan_delta': _q(geometry.tan_delta, '1'),
        }
    return record


def surface_record(surface: QiSurface) -> Dict[str, Any]:
    return {
        'type': 'QiSurface',
        'device_id': surface.device_id,
        'resonator_index': _q(surface.resonator_index, '1'),
        'temperatures': _q(surface.temperatures.tolist(), 'mK'),
        'powers': _q(surface.powers.tolist(), 'dBm'),
        'q_i': _q(_grid(surface.q_i), '1'),
        'sigma': _q(_grid(surface.sigma), '1'),
        'regime': surface.regime.tolist(),
        'frequency': None if surface.frequency is None else _q(surface.frequency, 'Hz'),
    }


def surface_from_record(record: Dict[str, Any]) -> QiSurface:
    def grid(rows):
        return [[math.nan if v is None else v for v in row] for row in rows]

    return QiSurface(device_id=record['device_id'],
                     resonator_index=int(_value(record['resonator_index'])),
                     temperatures=_value(record['temperatures']),
                     powers=_value(record['powers']),
                     q_i=grid(_value(record['q_i'])),
                     sigma=grid(_value(record['sigma'])),
                     regime=record.get('regime'),
                     frequency=_value(record.get('frequency')))


def regime_record(report: RegimeReport) -> Dict[str, Any]:
    return {
        'type': 'RegimeReport',
        'row_labels': list(report.row_labels),
        'spread': _q([_clean(s) for s in report.spread], '1'),
        'boundaries': [{'power_dbm': _q(b.power_dbm, 'dBm'),
                        'dependent_mk': _q(b.dependent_mk, 'mK'),
                        'saturated_mk': _q(b.saturated_mk, 'mK')} for b in report.boundaries],
        'monotonicity_flags': dict(report.monotonicity_flags),
        'notes': list(report.notes),
        'eps_sat': _q(report.eps_sat, '1'),
        'eps_dep': _q(report.eps_dep, '1'),
    }


def tls_fit_record(fit: TlsFit) -> Dict[str, Any]:
    return {
        'type': 'TlsFit',
        'f_delta0': _q(fit.f_delta0, '1'),
        'p_c': _q(fit.p_c_dbm, 'dBm'),
        'q_other': _q(fit.q_other, '1'),
        'rms': _q(fit.rms, 'ln(1)'),
        'frequency': _q(fit.frequency, 'Hz'),
        'exponent': _q(fit.exponent, '1'),
        'converged': fit.converged,
        'message': fit.message,
    }


def comparison_record(comparison: SurfaceComparison) -> Dict[str, Any]:
    return {
        'type': 'SurfaceComparison',
        'label_a': comparison.label_a,
        'label_b': comparison.label_b,
        'median_ratio': _q(comparison.median_ratio, '1'),
        'cells': [{'temperature_mk': _q(c['temperature_mk'], 'mK'),
                   'power_dbm': _q(c['power_dbm'], 'dBm'),
                   'q_i_a': _q(c['q_i_a'], '1'),
                   'q_i_b': _q(c['q_i_b'], '1'),
                   'ratio': _q(c['ratio'], '1')} for c in comparison.cells],
    }


def file_digest(path: str) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(65536), b''):
            digest.update(block)
    return digest.hexdigest()


class ResultFileManager:
    """Builds, validates, writes and reads result documents"""

    def __init__(self, validator: Optional[AnalysisValidator] = None):
        self.validator = validator or AnalysisValidator()

    def build(self, records: Iterable[Dict[str, Any]], inputs: Iterable[str] = (),
              config: Optional[Dict[str, Any]] = None, timestamp: bool = True) -> Dict[str, Any]:
        document = {
            'schema_version': SCHEMA_VERSION,
            'tool': {'name': TOOL_NAME, 'version': TOOL_VERSION},
            'provenance': {
                'inputs': [{'path': path, 'sha256': file_digest(path)} for path in inputs],
                'config': config or {},
            },
            'records': list(records),
        }
        if timestamp:
            document['generated_at'] = datetime.now(timezone.utc).isoformat()
        self.validate(document)
        return document

    def validate(self, document: Dict[str, Any]):
        result = self.validator.validate_result_document(document, SCHEMA_VERSION)
        if not result['valid']:
            raise SchemaError("Invalid result document: " + "; ".join(result['errors']))

    def dumps(self, document: Dict[str, Any]) -> str:
        return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, document: Dict[str, Any], path: str) -> str:
        try:
            with open(path, 'w') as f:
                f.write(self.dumps(document))
        except OSError as e:
            logger.error(f"Error writing result file {path}: {str(e)}")
            raise
        logger.info(f"Wrote {len(document['records'])} records to {path}")
        return path

    def read(self, path: str) -> Dict[str, Any]:
        try:
            with open(path, 'r') as f:
                document = json.load(f)
        except FileNotFoundError:
            raise SchemaError(f"Result file not found: {path}")
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path} is not valid JSON: {e.msg}", line=e.lineno)
        self.validate(document)
        return document

    @staticmethod
    def records_of(document: Dict[str, Any], record_type: str) -> List[Dict[str, Any]]:
        return [r for r in document['records'] if r.get('type') == record_type]
