"""
Tests for src.metrics.

Covers:
  - confusion_counts worked examples
  - iou_metric / dice_metric worked examples and the all-skipped rule
  - Brute-force per-pixel counting oracle on 100 random 8x8 pairs per task
  - Dice = 2 IoU / (1 + IoU) per class
  - aggregate_report: mean, population std, per-video groups, empty input
"""

import unittest

import numpy as np

from src.metrics import (
    aggregate_report,
    confusion_counts,
    dice_metric,
    evaluation_classes,
    iou_metric,
    per_class_scores,
)
from src.schemas import ImageScore
from src.tasks import get_task_spec


def oracle_scores(pred: np.ndarray, gt: np.ndarray, classes):
    """Pixel-by-pixel counting, no numpy vector ops."""
    ious, dices = [], []
    for c in classes:
        tp = fp = fn = 0
        for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
            if p == c and g == c:
                tp += 1
            elif p == c:
                fp += 1
            elif g == c:
                fn += 1
        if tp + fp + fn == 0:
            continue
        ious.append(tp / (tp + fp + fn))
        dices.append(2 * tp / (2 * tp + fp + fn))
    if not ious:
        return 1.0, 1.0
    return sum(ious) / len(ious), sum(dices) / len(dices)


def row(image_id: str, video_id: str, iou: float, dice: float = None) -> ImageScore:
    return ImageScore(image_id=image_id, video_id=video_id, iou=iou, dice=iou if dice is None else dice)


class TestConfusionCounts(unittest.TestCase):
    def test_worked_example(self):
        counts = confusion_counts(np.array([1, 0, 1, 0]), np.array([1, 1, 0, 0]), 1)
        self.assertEqual((counts.tp, counts.fp, counts.fn), (1, 1, 1))

    def test_identical_masks(self):
        mask = np.array([[1, 0], [1, 1]])
        counts = confusion_counts(mask, mask, 1)
        self.assertEqual((counts.tp, counts.fp, counts.fn), (3, 0, 0))

    def test_absent_class(self):
        counts = confusion_counts(np.zeros(4), np.zeros(4), 2)
        self.assertTrue(counts.empty)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            confusion_counts(np.zeros(4), np.zeros(5), 1)


class TestImageMetrics(unittest.TestCase):
    def test_binary_worked_example(self):
        pred, gt = np.array([[1, 0, 1, 0]]), np.array([[1, 1, 0, 0]])
        self.assertAlmostEqual(iou_metric(pred, gt, "binary"), 1 / 3)
        self.assertAlmostEqual(dice_metric(pred, gt, "binary"), 0.5)

    def test_perfect_prediction(self):
        gt = np.array([[0, 1], [2, 3]])
        self.assertEqual(iou_metric(gt, gt, "parts"), 1.0)
        self.assertEqual(dice_metric(gt, gt, "parts"), 1.0)

    def test_parts_silent_on_one_class(self):
        gt = np.array([[1, 1], [2, 2]])
        pred = np.array([[1, 1], [0, 0]])
        self.assertAlmostEqual(iou_metric(pred, gt, "parts"), 0.5)

    def test_all_skipped_scores_one(self):
        empty = np.zeros((4, 4), dtype=np.uint8)
        self.assertEqual(iou_metric(empty, empty, "type"), 1.0)
        self.assertEqual(dice_metric(empty, empty, "binary"), 1.0)

    def test_empty_image_rejected(self):
        with self.assertRaises(ValueError):
            iou_metric(np.zeros((0, 4)), np.zeros((0, 4)), "binary")

    def test_evaluation_classes(self):
        self.assertEqual(evaluation_classes("binary"), [1])
        self.assertEqual(evaluation_classes(get_task_spec("parts")), [1, 2, 3])
        self.assertEqual(evaluation_classes("type"), list(range(1, 8)))


class TestOracleEquivalence(unittest.TestCase):
    def test_random_masks_match_counting_oracle(self):
        rng = np.random.default_rng(0)
        for kind, labels in (("binary", 2), ("parts", 4), ("type", 8)):
            classes = evaluation_classes(kind)
            for _ in range(100):
                pred = rng.integers(0, labels, size=(8, 8))
                gt = rng.integers(0, labels, size=(8, 8))
                expected = oracle_scores(pred, gt, classes)
                self.assertEqual(iou_metric(pred, gt, kind), expected[0])
                self.assertEqual(dice_metric(pred, gt, kind), expected[1])

    def test_dice_iou_identity_per_class(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            pred = rng.integers(0, 8, size=(8, 8))
            gt = rng.integers(0, 8, size=(8, 8))
            for score in per_class_scores(pred, gt, range(1, 8)).values():
                if score is None:
                    continue
                iou, dice = score
                self.assertLess(abs(dice - 2 * iou / (1 + iou)), 1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 4, size=(8, 8))
        gt = rng.integers(0, 4, size=(8, 8))
        perm = rng.permutation(64)
        shuffled_pred = pred.ravel()[perm].reshape(8, 8)
        shuffled_gt = gt.ravel()[perm].reshape(8, 8)
        self.assertEqual(iou_metric(pred, gt, "parts"), iou_metric(shuffled_pred, shuffled_gt, "parts"))


class TestAggregateReport(unittest.TestCase):
    def test_mean_and_population_std(self):
        report = aggregate_report([row("a", "v1", 0.8), row("b", "v1", 0.9)])
        self.assertAlmostEqual(report.mean_iou, 0.85)
        self.assertAlmostEqual(report.std_iou, 0.05)
        self.assertEqual(report.settings.std_convention, "population")

    def test_single_row(self):
        report = aggregate_report([row("a", "v1", 0.7)])
        self.assertAlmostEqual(report.mean_iou, 0.7)
        self.assertEqual(report.std_iou, 0.0)

    def test_per_video_groups(self):
        rows = [
            row("v2/frame000", "v2", 0.0),
            row("v1/frame000", "v1", 1.0),
            row("v2/frame001", "v2", 0.5),
            row("v1/frame001", "v1", 0.5),
        ]
        report = aggregate_report(rows, task="binary", label="test")
        self.assertEqual([g.video_id for g in report.groups], ["v1", "v2"])
        self.assertAlmostEqual(report.groups[0].mean_iou, 0.75)
        self.assertAlmostEqual(report.groups[1].mean_iou, 0.25)
        self.assertAlmostEqual(report.mean_iou, 0.5)
        self.assertEqual([r.image_id for r in report.per_image][0], "v1/frame000")
        self.assertEqual(report.task, "binary")
        self.assertEqual(report.label, "test")

    def test_empty_rows_rejected(self):
        with self.assertRaises(ValueError):
            aggregate_report([])
