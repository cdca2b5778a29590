"""
Runtime settings for epscope.
Defaults for numerical tolerances and scan parallelism, overridable through
EPSCOPE_* environment variables (a local .env file is honoured).
"""

import os
from typing import Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

__version__ = "1.0.0"

ENV_PREFIX = "EPSCOPE_"


class ConfigError(ValueError):
    """Raised for malformed configuration values (files, flags or environment)."""


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name} must be a number, got {raw!r}")
    if value <= 0:
        raise ConfigError(f"{ENV_PREFIX}{name} must be positive, got {raw!r}")
    return value


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{ENV_PREFIX}{name} must be >= 1, got {raw!r}")
    return value


def default_jobs() -> int:
    """Scan worker count: EPSCOPE_JOBS or the number of available cores."""
    return _env_int("JOBS", None) or os.cpu_count() or 1


def default_rank_tol() -> float:
    """Relative singular-value cutoff for kernel dimensions."""
    return _env_float("RANK_TOL", 1e-8)


def default_cluster_radius() -> float:
    """Eigenvalue clustering radius, relative to the Frobenius norm of L."""
    return _env_float("CLUSTER_RADIUS", 1e-6)


def default_marginal_tol() -> float:
    """Marginal-mode tolerance for scans, relative to gamma0."""
    return _env_float("MARGINAL_TOL", 1e-7)


def log_level() -> str:
    return os.getenv(ENV_PREFIX + "LOG_LEVEL", "INFO").upper()
