import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict

_logger = logging.getLogger("audit")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO", audit_enabled: bool = True) -> None:
    """Set up the root logger and the JSON-lines audit logger.

    Safe to call more than once; handlers are only attached the first time.
    """
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(level.upper())

    if not _logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        # Keep raw JSON line without extra prefixes
        handler.setFormatter(logging.Formatter("%(message)s"))
        _logger.addHandler(handler)
    _logger.setLevel(logging.INFO if audit_enabled else logging.WARNING)
    # Do not propagate to root to avoid duplication
    _logger.propagate = False


def _jsonable(value: Any) -> Any:
    # numpy scalars and arrays show up in solver stats
    if hasattr(value, "tolist"):
        return value.tolist()
    return value


def audit(event: str, **fields: Any) -> None:
    """Emit a structured event as a single JSON line on the audit logger."""
    payload: Dict[str, Any] = {
        "ts": datetime.now(timezone.utc).isoformat(),
        "event": event,
    }
    payload.update({key: _jsonable(value) for key, value in fields.items()})
    try:
        _logger.info(json.dumps(payload, ensure_ascii=False, default=str))
    except Exception:
        # Fallback to plain message if JSON logging fails
        _logger.info(f"AUDIT {event} fields={fields}")
