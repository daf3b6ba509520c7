"""
Tests for src.run_log.

Covers:
  - log_epoch disabled by NESTEDU_RUN_LOG_DISABLED
  - log_epoch appends one sorted-key JSON line per epoch
  - log_epoch never raises when the write fails
"""

import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

# Default to disabled for module import; individual tests re-enable.
os.environ.setdefault("NESTEDU_RUN_LOG_DISABLED", "true")

from src.run_log import RUN_LOG_NAME, log_epoch, run_log_disabled
from src.schemas import EpochRecord


RECORD = EpochRecord(epoch=3, train_loss=0.25, val_iou=0.8, val_dice=0.88, wall_seconds=1.5)


class TestRunLogDisabled(unittest.TestCase):
    @patch.dict(os.environ, {"NESTEDU_RUN_LOG_DISABLED": "true"})
    def test_disabled_writes_nothing(self):
        with tempfile.TemporaryDirectory() as tmp:
            log_epoch(tmp, RECORD)
            self.assertFalse((Path(tmp) / RUN_LOG_NAME).exists())

    @patch.dict(os.environ, {"NESTEDU_RUN_LOG_DISABLED": "1"})
    def test_truthy_values(self):
        self.assertTrue(run_log_disabled())

    @patch.dict(os.environ, {"NESTEDU_RUN_LOG_DISABLED": ""})
    def test_empty_means_enabled(self):
        self.assertFalse(run_log_disabled())


@patch.dict(os.environ, {"NESTEDU_RUN_LOG_DISABLED": "false"})
class TestLogEpoch(unittest.TestCase):
    def test_appends_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            log_epoch(tmp, RECORD, split_label="fold-0-of-4", task="binary")
            log_epoch(tmp, RECORD.model_copy(update={"epoch": 4}), split_label="fold-0-of-4", task="binary")
            lines = (Path(tmp) / RUN_LOG_NAME).read_text().splitlines()
        self.assertEqual(len(lines), 2)
        row = json.loads(lines[0])
        self.assertEqual(row["epoch"], 3)
        self.assertEqual(row["split"], "fold-0-of-4")
        self.assertEqual(row["task"], "binary")
        self.assertEqual(row["val_iou"], 0.8)
        self.assertEqual(list(row), sorted(row))
        self.assertEqual(json.loads(lines[1])["epoch"], 4)

    def test_creates_missing_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            log_epoch(Path(tmp) / "nested" / "run", RECORD)
            self.assertTrue((Path(tmp) / "nested" / "run" / RUN_LOG_NAME).exists())

    def test_never_raises_on_write_failure(self):
        with tempfile.TemporaryDirectory() as tmp:
            with patch("builtins.open", side_effect=OSError("disk full")):
                with self.assertLogs("src.run_log", level="WARNING") as logs:
                    log_epoch(tmp, RECORD)
        self.assertIn("non-fatal", logs.output[0])
