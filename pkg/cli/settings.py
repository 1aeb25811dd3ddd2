"""
Environment settings for command-line runs.

Variables are read from `.env.local` in the project root (falling back to
the current directory) and from the process environment:

    KDLAB_LOG_LEVEL   logging level name, default INFO
    KDLAB_PROGRESS    1/true/yes shows tqdm progress bars, default off
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv


_project_root = Path(__file__).parent.parent
_env_file = _project_root / ".env.local"

TRUTHY = ("1", "true", "yes", "on")


@dataclass(frozen=True)
class CliSettings:
    log_level: int = logging.INFO
    show_progress: bool = False


def load_settings() -> CliSettings:
    """Load `.env.local` (without overriding set variables) and read the knobs."""
    if _env_file.exists():
        load_dotenv(_env_file)
    else:
        load_dotenv(".env.local")

    level_name = os.getenv("KDLAB_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        logging.getLogger(__name__).warning(f"Unknown KDLAB_LOG_LEVEL {level_name!r}, using INFO")
        level = logging.INFO
    progress = os.getenv("KDLAB_PROGRESS", "0").strip().lower() in TRUTHY
    return CliSettings(log_level=level, show_progress=progress)
