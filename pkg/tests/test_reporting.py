"""
Tests for src.reporting.

Covers:
  - format_mean_std cell format
  - resolve_formats aliases, de-duplication and unsupported formats
  - export_report: JSON round trip through load_json_report, CSV rows,
    markdown summary and per-video mIOU table
"""

import csv
import tempfile
import unittest
from pathlib import Path

from src.metrics import aggregate_report
from src.reporting import export_report, format_mean_std, load_json_report, resolve_formats
from src.schemas import ImageScore


def sample_report():
    rows = [
        ImageScore(image_id="v1/frame000", video_id="v1", iou=1.0, dice=1.0),
        ImageScore(image_id="v1/frame001", video_id="v1", iou=0.5, dice=2 / 3),
        ImageScore(image_id="v2/frame000", video_id="v2", iou=0.25, dice=0.4),
    ]
    return aggregate_report(rows, task="binary", label="fold-0-of-4")


class TestFormatMeanStd(unittest.TestCase):
    def test_percent_cell(self):
        self.assertEqual(format_mean_std(0.8294, 0.1682), "82.94 ± 16.82")

    def test_zero_std(self):
        self.assertEqual(format_mean_std(1.0, 0.0), "100.00 ± 0.00")


class TestResolveFormats(unittest.TestCase):
    def test_default_list(self):
        self.assertEqual(resolve_formats("csv,json,markdown"), ["csv", "json", "markdown"])

    def test_aliases_and_duplicates(self):
        self.assertEqual(resolve_formats(" MD , markdown,json "), ["markdown", "json"])

    def test_unsupported(self):
        with self.assertRaises(ValueError) as ctx:
            resolve_formats("csv,xlsx")
        self.assertIn("xlsx", str(ctx.exception))

    def test_empty(self):
        with self.assertRaises(ValueError):
            resolve_formats(" , ")


class TestExportReport(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.report = sample_report()

    def tearDown(self):
        self.tmp.cleanup()

    def test_json_round_trip(self):
        path = export_report(self.report, "json", self.dir / "out" / "report.json")
        self.assertEqual(load_json_report(path), self.report)

    def test_csv_rows(self):
        path = export_report(self.report, "csv", self.dir / "report.csv")
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([r["image_id"] for r in rows], ["v1/frame000", "v1/frame001", "v2/frame000"])
        self.assertEqual(float(rows[2]["iou"]), 0.25)

    def test_markdown_tables(self):
        path = export_report(self.report, "md", self.dir / "report.md")
        text = path.read_text()
        self.assertIn("| IOU(%) | Dice(%) |", text)
        self.assertIn(format_mean_std(self.report.mean_iou, self.report.std_iou), text)
        self.assertIn("| v1 | 2 | 0.750 |", text)
        self.assertIn("| v2 | 1 | 0.250 |", text)
        self.assertIn("fold-0-of-4", text)

    def test_one_format_at_a_time(self):
        with self.assertRaises(ValueError):
            export_report(self.report, "csv,json", self.dir / "x")

    def test_unsupported_format(self):
        with self.assertRaises(ValueError):
            export_report(self.report, "xml", self.dir / "x.xml")
