# cli/settings.py
"""
Environment-driven settings. A .env file in the working directory is loaded first.
"""

import os

from dotenv import load_dotenv

from lanes.errors import InvalidConfig
from logs.json_logger import JSONLogger

load_dotenv()

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MANIFEST_DIR = os.path.join(ROOT_DIR, "manifests")


def threads() -> int:
    raw = os.getenv("LANEPATCH_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfig(f"LANEPATCH_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise InvalidConfig(f"LANEPATCH_THREADS must be >= 1, got {value}")
    return value


def get_logger() -> JSONLogger:
    try:
        return JSONLogger.from_env()
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
