"""
Validators for the resonator analysis toolkit
Handles input validation for traces, model parameters and API requests
"""

from typing import Dict, Any, List, Optional, Sequence
import math

import numpy as np


class AnalysisValidator:

    VALID_COUPLINGS = ['inductive', 'capacitive', 'unknown']
    VALID_SCAN_KINDS = ['wide', 'narrow', 'full']
    VALID_RESONATOR_INDICES = [1, 2, 3, 4]
    VALID_TRACE_FORMATS = ['reim', 'dbdeg']
    RESULT_RECORD_TYPES = ['ResonatorFit', 'DelayFit', 'KiResult', 'DeviceKiFit',
                           'LineParams', 'QiSurface', 'RegimeReport', 'TlsFit',
                           'SurfaceComparison']

    MIN_TRACE_POINTS = 8

    def validate_trace_arrays(self, freq: np.ndarray, s21: np.ndarray) -> Dict[str, Any]:
        """Validate the frequency and S21 arrays of a trace"""
        errors = []

        if freq.ndim != 1 or s21.ndim != 1:
            errors.append("freq and s21 must be one-dimensional")
            return {'valid': False, 'errors': errors}

        if len(freq) != len(s21):
            errors.append(f"freq has {len(freq)} samples but s21 has {len(s21)}")
        if len(freq) < self.MIN_TRACE_POINTS:
            errors.append(f"A trace needs at least {self.MIN_TRACE_POINTS} samples, got {len(freq)}")

        if not np.all(np.isfinite(freq)):
            errors.append("freq contains non-finite values")
        if not np.all(np.isfinite(s21)):
            errors.append("s21 contains non-finite values")

        if np.all(np.isfinite(freq)) and len(freq) > 0:
            if np.any(freq <= 0):
                errors.append("All frequencies must be positive")
            if len(freq) > 1 and np.any(np.diff(freq) <= 0):
                errors.append("Frequencies must be strictly increasing")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_meta(self, resonator_index: Any, temperature_mk: Optional[float],
                      coupling: str, scan_kind: str, device_id: str) -> Dict[str, Any]:
        """Validate measurement metadata"""
        errors = []

        if not isinstance(device_id, str) or not device_id.strip():
            errors.append("device_id is required")

        if resonator_index not in self.VALID_RESONATOR_INDICES:
            errors.append(f"resonator_index must be one of: {', '.join(map(str, self.VALID_RESONATOR_INDICES))}")

        if temperature_mk is not None and not (self._is_number(temperature_mk) and temperature_mk >= 0):
            errors.append("temperature_mk must be a non-negative number")

        if coupling not in self.VALID_COUPLINGS:
            errors.append(f"coupling must be one of: {', '.join(self.VALID_COUPLINGS)}")

        if scan_kind not in self.VALID_SCAN_KINDS:
            errors.append(f"scan_kind must be one of: {', '.join(self.VALID_SCAN_KINDS)}")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_band(self, center: float, span: float) -> Dict[str, Any]:
        """Validate a frequency band"""
        errors = []

        if not self._is_number(center) or not self._is_number(span):
            errors.append("Band center and span must be finite numbers")
        elif span <= 0:
            errors.append("Band span must be positive")
        elif center - span / 2 <= 0:
            errors.append("Band lower edge must be above 0 Hz")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_geometry(self, center_width: float, gap: float,
                          substrate_eps_r: float, tan_delta: float) -> Dict[str, Any]:
        """Validate CPW geometry"""
        errors = []

        if not self._is_positive(center_width):
            errors.append("center_width must be positive")
        if not self._is_positive(gap):
            errors.append("gap must be positive")
        if not self._is_number(substrate_eps_r) or substrate_eps_r < 1:
            errors.append("substrate_eps_r must be at least 1")
        if not self._is_number(tan_delta) or tan_delta < 0:
            errors.append("tan_delta must be non-negative")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_notch_params(self, f0: float, q_total: float, q_c: float,
                              delta_omega: float, phi0: float, delay: float,
                              amp: float) -> Dict[str, Any]:
        """Validate notch resonator parameters"""
        errors = []

        if not self._is_positive(f0):
            errors.append("f0 must be positive")
        if not self._is_positive(q_total):
            errors.append("q_total must be positive")
        if not self._is_positive(q_c):
            errors.append("q_c must be positive")
        if self._is_positive(q_total) and self._is_positive(q_c) and q_total > q_c * (1 + 1e-9):
            errors.append("q_total cannot exceed q_c (internal quality factor would be negative)")
        if not self._is_number(delta_omega):
            errors.append("delta_omega must be finite")
        if not self._is_number(phi0):
            errors.append("phi0 must be finite")
        if not self._is_number(delay):
            errors.append("delay must be finite")
        if not self._is_positive(amp):
            errors.append("amp must be positive")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_fit_config(self, max_iterations: Any, relative_tolerance: Any,
                            damping_init: Any, bounds: Dict[str, Sequence[float]]) -> Dict[str, Any]:
        """Validate fit configuration"""
        errors = []

        if not isinstance(max_iterations, int) or max_iterations < 1:
            errors.append("max_iterations must be an integer of at least 1")
        if not self._is_positive(relative_tolerance):
            errors.append("relative_tolerance must be positive")
        if not self._is_positive(damping_init):
            errors.append("damping_init must be positive")

        for name, limits in (bounds or {}).items():
            if name not in ('f0', 'q_total', 'q_c', 'delta_omega', 'phi0'):
                errors.append(f"Unknown bounded parameter: {name}")
            elif len(limits) != 2 or not limits[0] < limits[1]:
                errors.append(f"Bounds for {name} must be (min, max) with min < max")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    # Request validators for the HTTP surface

    def validate_cpw_request(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Validate line-parameter request data"""
        errors = []

        if not data:
            errors.append("Request body is required")
            return {'valid': False, 'errors': errors}

        for key in ('center_width', 'gap'):
            if not self._is_positive(data.get(key)):
                errors.append(f"{key} (meters) is required and must be positive")

        eps_r = data.get('substrate_eps_r', 11.7)
        if not self._is_number(eps_r) or eps_r < 1:
            errors.append("substrate_eps_r must be at least 1")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_ki_request(self, data: Dict[str, Any], require_pairs: bool = False) -> Dict[str, Any]:
        """Validate kinetic-inductance request data"""
        errors = []

        if not data:
            errors.append("Request body is required")
            return {'valid': False, 'errors': errors}

        if not self._is_positive(data.get('l_geom')):
            errors.append("l_geom (H/m) is required and must be positive")

        if require_pairs:
            pairs = data.get('pairs')
            if not isinstance(pairs, list) or not pairs:
                errors.append("pairs must be a non-empty list of [f_meas, f_model]")
            else:
                for i, pair in enumerate(pairs):
                    if not isinstance(pair, (list, tuple)) or len(pair) != 2 \
                            or not all(self._is_positive(v) for v in pair):
                        errors.append(f"pairs[{i}] must be two positive frequencies")
        else:
            for key in ('f_meas', 'f_model'):
                if not self._is_positive(data.get(key)):
                    errors.append(f"{key} (Hz) is required and must be positive")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_qc_request(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Validate linewidth Q_C request data"""
        errors = []

        if not data:
            errors.append("Request body is required")
            return {'valid': False, 'errors': errors}

        if not self._is_positive(data.get('f0')):
            errors.append("f0 (Hz) is required and must be positive")
        if not self._is_positive(data.get('q_c')):
            errors.append("q_c is required and must be positive")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_qi_request(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Validate Q_i decomposition request data"""
        errors = []

        if not data:
            errors.append("Request body is required")
            return {'valid': False, 'errors': errors}

        for key in ('q_total', 'q_c'):
            if not self._is_positive(data.get(key)):
                errors.append(f"{key} is required and must be positive")
        for key in ('sigma_q_total', 'sigma_q_c'):
            if key in data and not (self._is_number(data[key]) and data[key] >= 0):
                errors.append(f"{key} must be non-negative")

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def validate_result_document(self, document: Dict[str, Any], schema_version: int) -> Dict[str, Any]:
        """Validate a result file against its declared schema version"""
        errors = []

        if not isinstance(document, dict):
            return {'valid': False, 'errors': ["Result document must be an object"]}

        if document.get('schema_version') != schema_version:
            errors.append(f"schema_version must be {schema_version}")
        for key in ('tool', 'provenance', 'records'):
            if key not in document:
                errors.append(f"Missing top-level key: {key}")

        provenance = document.get('provenance', {})
        inputs = provenance.get('inputs') if isinstance(provenance, dict) else None
        if not isinstance(inputs, list):
            errors.append("provenance.inputs must be a list")
        else:
            for i, entry in enumerate(inputs):
                if not isinstance(entry, dict) or not entry.get('sha256'):
                    errors.append(f"provenance.inputs[{i}] is missing its sha256 digest")

        records = document.get('records', [])
        if not isinstance(records, list):
            errors.append("records must be a list")
            records = []
        for i, record in enumerate(records):
            if not isinstance(record, dict):
                errors.append(f"records[{i}] must be an object")
                continue
            if record.get('type') not in self.RESULT_RECORD_TYPES:
                errors.append(f"records[{i}] has unknown type: {record.get('type')}")
            body = {key: value for key, value in record.items() if key != 'type'}
            errors.extend(f"records[{i}].{path}" for path in self._unpaired_numbers(body, "record"))

        return {
            'valid': len(errors) == 0,
            'errors': errors
        }

    def _unpaired_numbers(self, node: Any, path: str) -> List[str]:
        """Find numeric leaves that are not wrapped as {value, unit}"""
        problems = []
        if isinstance(node, dict):
            if 'value' in node:
                if 'unit' not in node or not isinstance(node['unit'], str):
                    problems.append(f"{path} has a value without a unit")
                return problems
            for key, child in node.items():
                problems.extend(self._unpaired_numbers(child, f"{path}.{key}"))
        elif isinstance(node, list):
            for i, child in enumerate(node):
                problems.extend(self._unpaired_numbers(child, f"{path}[{i}]"))
        elif isinstance(node, (int, float)) and not isinstance(node, bool):
            problems.append(f"{path} is a bare number without a unit")
        return problems

    def _is_number(self, value: Any) -> bool:
        """Check for a finite real number"""
        if isinstance(value, bool) or value is None:
            return False
        try:
            return math.isfinite(float(value))
        except (TypeError, ValueError):
            return False

    def _is_positive(self, value: Any) -> bool:
        """Check for a finite positive number"""
        return self._is_number(value) and float(value) > 0
