"""
Environment-driven settings.
Values come from the process environment, optionally seeded from a .env file.
"""
import os
from typing import Optional

from dotenv import load_dotenv

from kinex.core.errors import ConfigurationError

load_dotenv()

DEFAULT_OUTPUT_DIR = os.getenv("KINEX_OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("KINEX_LOG_LEVEL", "INFO").upper()
SENTRY_DSN = os.getenv("SENTRY_DSN")
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")


def get_thread_cap() -> int:
    """
    Worker cap for replica and sweep concurrency.
    Reads KINEX_THREADS on every call so tests and the CLI can change it at runtime.
    """
    raw = os.getenv("KINEX_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigurationError(f"KINEX_THREADS must be an integer, got '{raw}'")
    if cap < 1:
        raise ConfigurationError(f"KINEX_THREADS must be at least 1, got {cap}")
    return cap


def resolve_workers(requested: Optional[int], jobs: int) -> int:
    """Number of worker processes for `jobs` independent tasks."""
    cap = get_thread_cap()
    if requested is not None:
        cap = min(cap, requested)
    return max(1, min(cap, jobs))
