"""
Formatting helpers for human summaries and result records
"""

import math
from typing import Any, Dict, Optional

from uncertainties import ufloat


def format_uncertainty(value: float, sigma: Optional[float]) -> str:
    """Render value with a last-digit parenthetical uncertainty, e.g. 3.3167549(8)"""
    if sigma is None or not math.isfinite(sigma) or sigma <= 0:
        return f"{value:.7g}"
    return format(ufloat(value, sigma), '.1uS')


def format_ghz(freq_hz: float, sigma_hz: Optional[float] = None) -> str:
    """Frequency in GHz with 7 decimals, or parenthetical when sigma is given"""
    if sigma_hz is None:
        return f"{freq_hz / 1e9:.7f}"
    return format_uncertainty(freq_hz / 1e9, sigma_hz / 1e9)


def quantity(value: Any, unit: str) -> Dict[str, Any]:
    """Pair a numeric value with its unit string for result files"""
    if hasattr(value, 'tolist'):
        value = value.tolist()
    return {'value': value, 'unit': unit}
