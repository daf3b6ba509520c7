"""
Tests for the command-line interface (src.cli).

Covers:
  - Exit codes: 0 success, 1 usage error, 2 runtime failure
  - synth: deterministic output tree and manifest
  - folds: table output, run manifest that replays to the same assignment,
    argument checks
  - train -> evaluate -> predict -> colorize on a tiny synthetic set, with
    no subcommand touching its input directories
  - train manifest replays to the same losses; predict --mapping override
  - train --fold all writes the cross-validation score
  - Config precedence: environment < config file < --set < flags
"""

import io
import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
from PIL import Image

os.environ.setdefault("NESTEDU_RUN_LOG_DISABLED", "true")

import typer
from rich.console import Console

from src.cli import MANIFEST_NAME, parse_override, resolve_train_config, run


def captured_console():
    buf = io.StringIO()
    return buf, Console(file=buf, width=200, color_system=None)


def tree_bytes(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.png"))}


def file_snapshot(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestExitCodes(unittest.TestCase):
    def test_unknown_subcommand(self):
        self.assertEqual(run(["nope"]), 1)

    def test_unknown_flag(self):
        self.assertEqual(run(["folds", "--videos", "a,b", "--bogus"]), 1)

    def test_missing_checkpoint_is_runtime_failure(self):
        buf, console = captured_console()
        with tempfile.TemporaryDirectory() as tmp, patch("src.cli.console", console):
            code = run(["evaluate", "--checkpoint", os.path.join(tmp, "missing.ckpt"), "--data", tmp, "--task", "binary"])
        self.assertEqual(code, 2)
        self.assertIn("checkpoint not found", buf.getvalue())

    def test_bad_format_is_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            code = run(["evaluate", "--checkpoint", os.path.join(tmp, "x.ckpt"), "--format", "xlsx"])
        self.assertEqual(code, 1)

    def test_unknown_task_is_usage_error(self):
        self.assertEqual(run(["train", "--task", "instrument", "--fold", "0"]), 1)

    def test_bad_fold_is_usage_error(self):
        self.assertEqual(run(["train", "--task", "binary", "--fold", "first"]), 1)


class TestSynth(unittest.TestCase):
    def test_deterministic_tree(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp) / "a", Path(tmp) / "b"
            args = ["--images", "4", "--size", "32x64", "--videos", "2", "--task", "parts", "--seed", "5"]
            self.assertEqual(run(["synth", "--out", str(a)] + args), 0)
            self.assertEqual(run(["synth", "--out", str(b)] + args), 0)
            self.assertEqual(tree_bytes(a), tree_bytes(b))
            self.assertTrue((a / "synthetic_video_01" / "ground_truth" / "parts" / "frame000.png").exists())
            manifest = json.loads((a / MANIFEST_NAME).read_text())
            self.assertEqual(manifest["command"], "synth")
            self.assertEqual(manifest["spec"]["seed"], 5)
            self.assertEqual((a / MANIFEST_NAME).read_text(), (b / MANIFEST_NAME).read_text())

    def test_bad_size(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(run(["synth", "--out", tmp, "--size", "big"]), 1)
            self.assertEqual(run(["synth", "--out", tmp, "--size", "32x30"]), 1)


class TestFolds(unittest.TestCase):
    def test_prints_assignment(self):
        buf, console = captured_console()
        with tempfile.TemporaryDirectory() as tmp, patch("src.cli.console", console):
            code = run(["folds", "--videos", "v1,v2,v3,v4", "--k", "2", "--seed", "1", "--out", tmp])
            manifest = json.loads((Path(tmp) / MANIFEST_NAME).read_text())
        self.assertEqual(code, 0)
        for video in ("v1", "v2", "v3", "v4"):
            self.assertIn(video, buf.getvalue())
        self.assertEqual(manifest["command"], "folds")
        self.assertEqual(sorted(manifest["assignments"]), ["v1", "v2", "v3", "v4"])

    def test_manifest_replays_to_same_assignment(self):
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / "a", Path(tmp) / "b"
            self.assertEqual(run(["folds", "--videos", "d,c,b,a,e", "--k", "3", "--seed", "4", "--out", str(first)]), 0)
            manifest = json.loads((first / MANIFEST_NAME).read_text())
            replay = [
                "folds", "--videos", ",".join(manifest["videos"]),
                "--k", str(manifest["k"]), "--seed", str(manifest["seed"]), "--out", str(second),
            ]
            self.assertEqual(run(replay), 0)
            again = json.loads((second / MANIFEST_NAME).read_text())
        self.assertEqual(again["assignments"], manifest["assignments"])

    def test_needs_exactly_one_source(self):
        self.assertEqual(run(["folds", "--k", "2"]), 1)
        self.assertEqual(run(["folds", "--videos", "a,b", "--data", "x", "--k", "2"]), 1)

    def test_k_too_large(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(run(["folds", "--videos", "v1,v2", "--k", "3", "--out", tmp]), 2)


class TestPipeline(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.data = self.root / "data"
        code = run(["synth", "--out", str(self.data), "--images", "4", "--size", "32x32", "--videos", "2", "--seed", "0"])
        self.assertEqual(code, 0)

    def tearDown(self):
        self.tmp.cleanup()

    def train_args(self, out: Path, fold: str = "0"):
        return [
            "train", "--task", "binary", "--fold", fold, "--data", str(self.data), "--out", str(out),
            "--epochs", "1", "--set", "model_width=0.125", "--set", "k=2",
        ]

    def test_train_evaluate_predict_colorize(self):
        data_before = file_snapshot(self.data)

        run_dir = self.root / "run"
        self.assertEqual(run(self.train_args(run_dir)), 0)
        for name in ("best.ckpt", "last.ckpt", "history.json", MANIFEST_NAME):
            self.assertTrue((run_dir / name).exists(), name)
        manifest = json.loads((run_dir / MANIFEST_NAME).read_text())
        self.assertEqual(manifest["learning_rate"], 1e-4)
        self.assertEqual(manifest["k"], 2)
        self.assertEqual(manifest["data_root"], str(self.data))
        self.assertEqual(manifest["model"]["num_classes"], 1)

        reports = self.root / "reports"
        code = run(["evaluate", "--checkpoint", str(run_dir / "best.ckpt"), "--data", str(self.data), "--out", str(reports)])
        self.assertEqual(code, 0)
        for name in ("report.csv", "report.json", "report.md", MANIFEST_NAME):
            self.assertTrue((reports / name).exists(), name)

        run_before = file_snapshot(run_dir)
        preds = self.root / "preds"
        frames = self.data / "synthetic_video_01"
        self.assertEqual(run(["predict", "--checkpoint", str(run_dir / "best.ckpt"), "--frames", str(frames), "--out", str(preds)]), 0)
        masks = preds / "synthetic_video_01" / "masks"
        self.assertTrue((masks / "frame000.png").exists())
        self.assertTrue((preds / "synthetic_video_01" / "color" / "frame000.png").exists())

        masks_before = file_snapshot(masks)
        colored = self.root / "colored"
        self.assertEqual(run(["colorize", "--masks", str(masks), "--task", "binary", "--out", str(colored)]), 0)
        self.assertTrue((colored / "frame000.png").exists())

        self.assertEqual(run(["folds", "--data", str(self.data), "--k", "2", "--out", str(self.root / "folds")]), 0)

        self.assertEqual(file_snapshot(self.data), data_before)
        self.assertEqual(file_snapshot(run_dir), run_before)
        self.assertEqual(file_snapshot(masks), masks_before)

    def test_train_manifest_replays_the_run(self):
        first = self.root / "first"
        self.assertEqual(run(self.train_args(first, fold="1")), 0)
        cfg = resolve_train_config(first / MANIFEST_NAME)
        self.assertEqual((cfg.model_width, cfg.k, cfg.epochs), (0.125, 2, 1))
        self.assertEqual(cfg.data_root, self.data)
        self.assertIsNotNone(cfg.model)

        second = self.root / "second"
        replay = ["train", "--config", str(first / MANIFEST_NAME), "--task", "binary", "--fold", "1", "--out", str(second)]
        self.assertEqual(run(replay), 0)
        losses = []
        for run_dir in (first, second):
            history = json.loads((run_dir / "history.json").read_text())
            losses.append([r["train_loss"] for r in history["records"]])
        self.assertEqual(len(losses[0]), len(losses[1]))
        for a, b in zip(*losses):
            self.assertLessEqual(abs(a - b), 1e-5 * abs(a))

    def test_predict_with_mapping_override(self):
        run_dir = self.root / "run"
        self.assertEqual(run(self.train_args(run_dir)), 0)
        mapping = self.root / "mapping.json"
        mapping.write_text(json.dumps({
            "task": "binary",
            "raw_to_class": {"0": 0, "1": 1},
            "class_names": ["background", "instrument"],
        }))
        preds = self.root / "preds"
        frames = self.data / "synthetic_video_02"
        args = ["predict", "--checkpoint", str(run_dir / "best.ckpt"), "--frames", str(frames), "--out", str(preds)]
        self.assertEqual(run(args + ["--mapping", str(mapping)]), 0)
        for path in (preds / "synthetic_video_02" / "masks").glob("*.png"):
            with Image.open(path) as img:
                self.assertLessEqual(set(np.unique(np.asarray(img)).tolist()), {0, 1})
        self.assertEqual(json.loads((preds / MANIFEST_NAME).read_text())["mapping"], str(mapping))

        parts_mapping = self.root / "parts.json"
        parts_mapping.write_text(json.dumps({
            "task": "parts",
            "raw_to_class": {"0": 0, "10": 1, "20": 2, "30": 3},
            "class_names": ["background", "shaft", "wrist", "clasper"],
        }))
        self.assertEqual(run(args + ["--mapping", str(parts_mapping)]), 2)

    def test_fold_all_writes_cv_score(self):
        out = self.root / "cv"
        self.assertEqual(run(self.train_args(out, fold="all")), 0)
        score = json.loads((out / "cv_score.json").read_text())
        self.assertEqual(score["folds"], 2)
        self.assertTrue((out / "fold-1" / "best.ckpt").exists())
        self.assertEqual(json.loads((out / "fold-1" / MANIFEST_NAME).read_text())["fold_index"], 1)

    def test_bad_override_syntax(self):
        args = self.train_args(self.root / "x") + ["--set", "novalue"]
        self.assertEqual(run(args), 1)

    def test_missing_dataset_is_runtime_failure(self):
        args = self.train_args(self.root / "x")
        args[args.index("--data") + 1] = str(self.root / "nowhere")
        self.assertEqual(run(args), 2)


class TestConfigResolution(unittest.TestCase):
    def test_precedence(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            path.write_text(json.dumps({"epochs": 5, "batch_size": 4, "loss": {"jaccard_weight": 0.3}}))
            cfg = resolve_train_config(path, ["epochs=7", "loss.jaccard_weight=0.5"], {"epochs": 9, "seed": None})
        self.assertEqual(cfg.epochs, 9)
        self.assertEqual(cfg.batch_size, 4)
        self.assertEqual(cfg.loss.jaccard_weight, 0.5)
        self.assertEqual(cfg.seed, 0)

    def test_protocol_defaults_without_config(self):
        cfg = resolve_train_config(None)
        self.assertEqual((cfg.learning_rate, cfg.epochs, cfg.batch_size, cfg.k), (1e-4, 100, 2, 4))

    def test_missing_config_file(self):
        with self.assertRaises(FileNotFoundError):
            resolve_train_config(Path("/nonexistent/cfg.json"))

    def test_parse_override(self):
        self.assertEqual(parse_override("loss.epsilon=1e-9"), (["loss", "epsilon"], 1e-9))
        self.assertEqual(parse_override("checkpoint_dir=runs/a"), (["checkpoint_dir"], "runs/a"))
        with self.assertRaises(typer.BadParameter):
            parse_override("epochs")

    def test_shipped_configs_validate(self):
        configs = Path(__file__).resolve().parent.parent / "configs"
        for name in ("default_train.json", "tiny_train.json"):
            resolve_train_config(configs / name)
