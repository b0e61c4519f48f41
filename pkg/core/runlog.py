"""
PDQLS CORE MODULE: THE RUN LOG
==============================
This file is part of THE VAULT - shared substrate for every pipeline.

Audit trail for constructions and solves. Each event is one JSON line
in logs/pdqls.log carrying timestamp, session, action, details and a
running action number. A failing write prints a warning and never
interrupts a computation.
"""

import json
import threading
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from core import config


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    return value


class RunLog:
    """
    JSON-lines event log shared by all pipelines of one process.
    """

    def __init__(self, log_file: Optional[Path] = None, enabled: bool = True):
        """
        Args:
            log_file: Target file (default: config.LOG_FILE)
            enabled: When False events are only kept in memory
        """
        self.log_file = Path(log_file) if log_file else config.LOG_FILE
        self.enabled = enabled
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S_") + uuid.uuid4().hex[:6]
        self.action_count = 0
        self.recent: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def log(self, action: str, details: Dict[str, Any]) -> Dict[str, Any]:
        """
        Append one event.

        Args:
            action: Short event name, e.g. "inverse_encoding"
            details: Event payload

        Returns:
            The entry as written
        """
        with self._lock:
            entry = {
                "timestamp": datetime.now().isoformat(),
                "session": self.session_id,
                "action": action,
                "details": _jsonable(details),
                "action_number": self.action_count,
            }
            self.action_count += 1
            self.recent.append(entry)
            if len(self.recent) > 200:
                del self.recent[:100]

            if self.enabled:
                try:
                    self.log_file.parent.mkdir(parents=True, exist_ok=True)
                    with open(self.log_file, "a", encoding="utf-8") as f:
                        f.write(json.dumps(entry) + "\n")
                except Exception as e:
                    print(f"⚠️ Failed to write log: {e}")
        return entry


_runlog_instance: Optional[RunLog] = None


def get_runlog() -> RunLog:
    """Get or create the process-wide RunLog."""
    global _runlog_instance
    if _runlog_instance is None:
        _runlog_instance = RunLog()
    return _runlog_instance


def set_runlog(runlog: Optional[RunLog]) -> None:
    """Replace the process-wide RunLog (None resets to lazy default)."""
    global _runlog_instance
    _runlog_instance = runlog


def log_event(action: str, **details: Any) -> Dict[str, Any]:
    """Shortcut: log an event on the shared RunLog."""
    return get_runlog().log(action, details)
