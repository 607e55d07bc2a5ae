# logs/json_logger.py
"""
Structured JSON logger that appends one JSON object per line.
"""

import json
import os
import threading
import time

LEVELS = {"debug": 10, "info": 20, "warning": 30, "error": 40}


class JSONLogger:
    def __init__(self, filepath="logs/lanepatch.jsonl", level="info"):
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}")
        folder = os.path.dirname(filepath)
        if folder:
            os.makedirs(folder, exist_ok=True)
        self.filepath = filepath
        self.level = level
        self._lock = threading.Lock()

    @classmethod
    def from_env(cls):
        return cls(os.getenv("LANEPATCH_LOG_PATH", "logs/lanepatch.jsonl"),
                   os.getenv("LANEPATCH_LOG_LEVEL", "info").lower())

    def enabled(self, level):
        return LEVELS[level] >= LEVELS[self.level]

    def debug(self, obj):
        self._log("debug", obj)

    def info(self, obj):
        self._log("info", obj)

    def warning(self, obj):
        self._log("warning", obj)

    def error(self, obj):
        self._log("error", obj)

    def _log(self, level, obj):
        if self.enabled(level):
            self._write({"level": level, "ts": time.time(), **obj})

    def _write(self, o):
        # scene workers may log from several threads
        with self._lock, open(self.filepath, "a") as f:
            f.write(json.dumps(o, default=str) + "\n")
