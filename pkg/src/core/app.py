import os
import sys
import logging
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')

# Get the directory of this script and project root
basedir = os.path.abspath(os.path.dirname(__file__))
project_root = os.path.abspath(os.path.join(basedir, '..', '..'))


@dataclass(frozen=True)
class Settings:
    """Environment settings for a run"""
    threads: int = 1
    log_level: str = 'INFO'


def configure_logging(level: str = 'INFO') -> None:
    """Send log records to stderr; stdout is reserved for primary outputs."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def load_settings(env_file: Optional[str] = None) -> Settings:
    """Read CANDI_LAB_* settings from a .env file (if present) and the environment."""
    try:
        from dotenv import load_dotenv
        load_dotenv(env_file or os.path.join(project_root, '.env'))
    except ImportError:
        logging.warning("python-dotenv not installed. Install with: pip install python-dotenv")

    raw_threads = os.environ.get('CANDI_LAB_THREADS', '1')
    try:
        threads = int(raw_threads)
    except ValueError:
        raise ConfigError(f"CANDI_LAB_THREADS must be a positive integer, got {raw_threads!r}")
    if threads < 1:
        raise ConfigError(f"CANDI_LAB_THREADS must be a positive integer, got {threads}")

    log_level = os.environ.get('CANDI_LAB_LOG_LEVEL', 'INFO').upper()
    if log_level not in LOG_LEVELS:
        raise ConfigError(f"CANDI_LAB_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {log_level!r}")

    return Settings(threads=threads, log_level=log_level)
