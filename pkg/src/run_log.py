"""
Per-epoch run log.

One JSON line per epoch appended to `<checkpoint_dir>/run_log.jsonl`. The
log is telemetry: writes are best-effort and non-fatal, and a training run
that cannot append a line still completes. history.json remains the
authoritative record.

Set NESTEDU_RUN_LOG_DISABLED=true to skip writes entirely (used in tests).
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Optional, Union

from .schemas import EpochRecord

logger = logging.getLogger(__name__)


RUN_LOG_NAME = "run_log.jsonl"


def run_log_disabled() -> bool:
    return os.getenv("NESTEDU_RUN_LOG_DISABLED", "").lower() in {"true", "1", "yes"}


def log_epoch(
    run_dir: Union[str, Path],
    record: EpochRecord,
    *,
    split_label: Optional[str] = None,
    task: Optional[str] = None,
) -> None:
    """Append one epoch row. Best-effort; never raises."""
    if run_log_disabled():
        return

    try:
        row = record.model_dump(mode="json")
        row["split"] = split_label
        row["task"] = task
        path = Path(run_dir) / RUN_LOG_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    except Exception as e:
        logger.warning(f"run log write failed (non-fatal): {e}")
