"""
Trace file storage
Delimited S21 trace files with a versioned header and a JSON metadata sidecar
"""

import io
import json
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.trace import Trace, TraceMeta
from utils.errors import (NonFiniteValueError, NonMonotoneFrequencyError, SchemaError,
                          TraceValidationError)

logger = logging.getLogger(__name__)

FORMAT_NAME = 'resonator-trace'
FORMAT_VERSION = 1
COLUMNS: Dict[str, List[str]] = {
    'reim': ['freq_hz', 're', 'im'],
    'dbdeg': ['freq_hz', 'mag_db', 'phase_deg'],
}
_NAN_SPELLINGS = {'nan', '+nan', '-nan'}
SIDECAR_SUFFIX = '.meta.json'


def sidecar_path(path: str) -> str:
    return f"{path}{SIDECAR_SUFFIX}"


class TraceFileManager:
    """Reads and writes trace files

    Layout: '#'-prefixed header lines ('# resonator-trace 1', '# format: reim'),
    then one column-name line, then one row per frequency.
    """

    def parse(self, path: str) -> Trace:
        """Parse a trace file and its sidecar into a validated Trace"""
        try:
            with open(path, 'r') as f:
                lines = f.read().splitlines()
        except FileNotFoundError:
            raise SchemaError(f"Trace file not found: {path}")

        fmt, header_lines = self._read_header(lines)
        expected = COLUMNS[fmt]
        column_line = header_lines + 1

        if len(lines) <= header_lines:
            raise SchemaError("Missing column-name line", line=column_line)
        names = [name.strip() for name in lines[header_lines].split(',')]
        for i, name in enumerate(expected):
            if i >= len(names) or names[i] != name:
                raise SchemaError(f"Expected columns {','.join(expected)} for format '{fmt}'",
                                  line=column_line, column=name)
        if len(names) != len(expected):
            raise SchemaError(f"Unexpected extra columns {names[len(expected):]}",
                              line=column_line, column=names[len(expected)])

        body = "\n".join(lines[header_lines:])
        try:
            frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False,
                                skip_blank_lines=False)
        except pd.errors.ParserError as e:
            raise SchemaError(f"Malformed row: {e}")

        values = {}
        for name in expected:
            raw = frame[name].fillna('').str.strip()
            numeric = pd.to_numeric(raw, errors='coerce')
            unparsable = numeric.isna() & ~raw.str.lower().isin(_NAN_SPELLINGS)
            if unparsable.any():
                row = int(np.flatnonzero(unparsable.to_numpy())[0])
                raise SchemaError(f"Value '{raw.iloc[row]}' is not a number",
                                  line=column_line + 1 + row, column=name)
            array = numeric.to_numpy(dtype=float)
            non_finite = ~np.isfinite(array)
            if non_finite.any():
                row = int(np.flatnonzero(non_finite)[0])
                raise NonFiniteValueError(f"Non-finite value '{raw.iloc[row]}'",
                                          line=column_line + 1 + row, column=name)
            values[name] = array

        freq = values['freq_hz']
        steps = np.diff(freq)
        if np.any(steps <= 0):
            row = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise NonMonotoneFrequencyError(
                f"Frequency {freq[row]:.17g} Hz does not increase on the previous row",
                line=column_line + 1 + row, column='freq_hz')

        if fmt == 'reim':
            s21 = values['re'] + 1j * values['im']
        else:
            s21 = 10 ** (values['mag_db'] / 20) * np.exp(1j * np.radians(values['phase_deg']))

        meta = self.read_meta(path)
        try:
            trace = Trace(freq, s21, meta)
        except TraceValidationError as e:
            raise SchemaError(f"{path}: {e.message}")

        logger.info(f"Parsed {trace} from {path}")
        return trace

    def _read_header(self, lines: List[str]) -> Tuple[str, int]:
        header_lines = 0
        version = None
        fmt = None
        for number, line in enumerate(lines, start=1):
            if not line.startswith('#'):
                break
            header_lines = number
            text = line[1:].strip()
            if text.startswith(FORMAT_NAME):
                try:
                    version = int(text[len(FORMAT_NAME):].strip())
                except ValueError:
                    raise SchemaError("Unreadable format version", line=number)
            elif text.startswith('format:'):
                fmt = text.split(':', 1)[1].strip()
                if fmt not in COLUMNS:
                    raise SchemaError(f"Unknown trace format '{fmt}'; expected one of "
                                      f"{', '.join(COLUMNS)}", line=number)

        if version is None:
            raise SchemaError(f"Missing '# {FORMAT_NAME} <version>' header line", line=1)
        if version != FORMAT_VERSION:
            raise SchemaError(f"Unsupported format version {version}", line=1)
        if fmt is None:
            raise SchemaError("Missing '# format: reim|dbdeg' header line", line=header_lines or 1)
        return fmt, header_lines

    def read_meta(self, path: str) -> TraceMeta:
        """Sidecar metadata, or defaults when the trace has none"""
        meta_path = sidecar_path(path)
        if not os.path.exists(meta_path):
            logger.warning(f"No metadata sidecar for {path}; using defaults")
            return TraceMeta()
        try:
            with open(meta_path, 'r') as f:
                return TraceMeta.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise SchemaError(f"Sidecar {meta_path} is not valid JSON: {e.msg}", line=e.lineno)

    def write(self, trace: Trace, path: str, fmt: str = 'reim') -> List[str]:
        """Write trace and sidecar; returns the paths written"""
        if fmt not in COLUMNS:
            raise SchemaError(f"Unknown trace format '{fmt}'")

        if fmt == 'reim':
            columns = [trace.freq, trace.s21.real, trace.s21.imag]
        else:
            columns = [trace.freq, trace.magnitude_db(), trace.phase_deg()]
        frame = pd.DataFrame(dict(zip(COLUMNS[fmt], columns)))

        try:
            with open(path, 'w', newline='') as f:
                f.write(f"# {FORMAT_NAME} {FORMAT_VERSION}\n")
                f.write(f"# format: {fmt}\n")
                frame.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
            with open(sidecar_path(path), 'w') as f:
                f.write(trace.meta.to_json() + "\n")
        except OSError as e:
            logger.error(f"Error writing trace {path}: {str(e)}")
            raise

        logger.info(f"Wrote {trace} to {path} ({fmt})")
        return [path, sidecar_path(path)]


def parse_trace(path: str) -> Trace:
    return TraceFileManager().parse(path)


def write_trace(trace: Trace, path: str, fmt: str = 'reim') -> List[str]:
    return TraceFileManager().write(trace, path, fmt)
