"""
Configuration for the resonator analysis toolkit
Environment profiles, logging setup and analysis defaults
"""

import os
import json
import logging
from dataclasses import dataclass, asdict, fields, replace
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Optional

from utils.errors import UsageError

TOOL_NAME = 'resonator-analysis'
TOOL_VERSION = '1.0.0'

CONFIG_ENV_VAR = 'RESONATOR_CONFIG'

logger = logging.getLogger(__name__)


class ProductionConfig:
    """Production configuration settings"""

    DEBUG = False

    # Logging settings
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('LOG_FILE', 'logs/resonator_analysis.log')
    LOG_MAX_BYTES = int(os.environ.get('LOG_MAX_BYTES', '10485760'))  # 10MB
    LOG_BACKUP_COUNT = int(os.environ.get('LOG_BACKUP_COUNT', '10'))

    # HTTP surface
    CORS_ORIGINS = os.environ.get('CORS_ORIGINS', '*').split(',')
    MAX_CONTENT_LENGTH = int(os.environ.get('MAX_CONTENT_LENGTH', '16777216'))  # 16MB

    @classmethod
    def setup_logging(cls):
        """Setup production logging"""
        log_dir = os.path.dirname(cls.LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        formatter = logging.Formatter('%(asctime)s [%(levelname)s] %(name)s: %(message)s')

        file_handler = RotatingFileHandler(
            cls.LOG_FILE,
            maxBytes=cls.LOG_MAX_BYTES,
            backupCount=cls.LOG_BACKUP_COUNT
        )
        file_handler.setFormatter(formatter)

        # stderr keeps stdout free for tables
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)

        root_logger = logging.getLogger()
        root_logger.setLevel(getattr(logging, cls.LOG_LEVEL, logging.INFO))
        root_logger.addHandler(file_handler)
        root_logger.addHandler(console_handler)

        logging.getLogger('werkzeug').setLevel(logging.WARNING)
        logging.getLogger('matplotlib').setLevel(logging.WARNING)


class DevelopmentConfig:
    """Development configuration settings"""

    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    CORS_ORIGINS = ['*']
    MAX_CONTENT_LENGTH = 16777216

    @classmethod
    def setup_logging(cls):
        """Setup development logging"""
        logging.basicConfig(
            level=getattr(logging, cls.LOG_LEVEL, logging.INFO),
            format='%(asctime)s [%(levelname)s] %(name)s: %(message)s'
        )
        logging.getLogger('werkzeug').setLevel(logging.WARNING)


def get_config():
    """Get configuration based on environment"""
    env = os.environ.get('RESONATOR_ENV', 'development')

    if env == 'production':
        return ProductionConfig
    else:
        return DevelopmentConfig


@dataclass(frozen=True)
class AnalysisSettings:
    """Analysis defaults; a JSON config file may override any field"""

    # Scan point counts (the VNA point counts are not fixed by the measurement protocol)
    narrow_points: int = 201
    wide_points: int = 1001
    # Narrow scan spans about two linewidths; the wide scan spans wide_factor narrow spans
    narrow_linewidths: float = 2.0
    wide_factor: float = 10.0
    exclusion_factor: float = 3.0
    delay_background_order: int = 1
    delay_refinement_passes: int = 10

    # Phase fit
    max_iterations: int = 200
    relative_tolerance: float = 1e-10
    damping_init: float = 1e-3

    # Linewidth refinement
    linewidth_tolerance: float = 1e-4
    linewidth_max_levels: int = 40

    # TLS regimes
    eps_sat: float = 0.05
    eps_dep: float = 0.2
    plateau_tolerance: float = 0.1
    tls_exponent: float = 0.5

    # CLI behaviour
    sweep_workers: int = 4
    suppress_timestamp: bool = False

    def to_dict(self) -> Dict[str, Any]:
        """Convert settings to dictionary"""
        return asdict(self)

    def with_overrides(self, overrides: Dict[str, Any]) -> 'AnalysisSettings':
        """Return a copy with the given fields replaced"""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise UsageError(f"Unknown configuration keys: {', '.join(unknown)}")
        return replace(self, **overrides)


def load_settings(path: Optional[str] = None) -> AnalysisSettings:
    """Load analysis settings from a JSON file

    The explicit path wins over the RESONATOR_CONFIG environment variable;
    without either the built-in defaults are returned.
    """
    settings = AnalysisSettings()
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return settings

    try:
        with open(path, 'r') as f:
            overrides = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise UsageError(f"Config file {path} is not valid JSON: {e}")

    if not isinstance(overrides, dict):
        raise UsageError(f"Config file {path} must contain a JSON object")

    logger.info(f"Loaded analysis settings from {path}")
    return settings.with_overrides(overrides)
