import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import typer
from dotenv import load_dotenv
from PIL import Image
from rich.console import Console
from rich.progress import track
from rich.table import Table

from .evaluation import evaluate as run_evaluation
from .evaluation import predict_index, stats_from_history, write_predictions
from .folds import kfold_split
from .importers import generate_synthetic, index_frames, load_endovis, write_dataset
from .labels import default_mapping, encode_mask, load_mapping, write_color_png
from .model import load_checkpoint, parameter_count
from .reporting import REPORT_FILENAMES, export_report, format_mean_std, resolve_formats
from .schemas import LabelMapping, SynthSpec, TrainConfig
from .tasks import get_task_spec, resolve_task
from .training import cross_validation_score, resolve_model_config, train as run_training

load_dotenv()

DEFAULT_DATA_ROOT = os.getenv("NESTEDU_DATA_ROOT", "data/endovis17")
DEFAULT_DEVICE = os.getenv("NESTEDU_DEVICE", "cpu")
DEFAULT_NUM_WORKERS = int(os.getenv("NESTEDU_NUM_WORKERS", "0"))
MANIFEST_NAME = "run_manifest.json"

app = typer.Typer(help="Nested U-structure surgical instrument segmentation")
console = Console()

# BadParameter derives from UsageError in every typer release, vendored click or not.
UsageError = typer.BadParameter.__mro__[1]


@app.callback()
def main():
    """Train, evaluate and run nested U-structure segmentation models."""
    logging.basicConfig(
        level=os.getenv("NESTEDU_LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


def _fail(message: str, code: int = 2):
    console.print(f"[red]Error: {message}[/red]")
    raise typer.Exit(code)


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------
def parse_override(item: str) -> Tuple[List[str], Any]:
    """'loss.jaccard_weight=0.5' -> (['loss', 'jaccard_weight'], 0.5). Values are JSON when they parse."""
    if "=" not in item:
        raise typer.BadParameter(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise typer.BadParameter(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_override(data: Dict[str, Any], path: List[str], value: Any) -> None:
    node = data
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def resolve_train_config(
    config_path: Optional[Path],
    overrides: Optional[List[str]] = None,
    flags: Optional[Dict[str, Any]] = None,
) -> TrainConfig:
    """Environment defaults < config file < --set overrides < explicit flags."""
    data: Dict[str, Any] = {
        "data_root": DEFAULT_DATA_ROOT,
        "device": DEFAULT_DEVICE,
        "num_workers": DEFAULT_NUM_WORKERS,
    }
    if config_path is not None:
        if not config_path.exists():
            raise FileNotFoundError(f"config file not found: {config_path}")
        with open(config_path) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {config_path} must hold a JSON object")
        data.update(loaded)
    for item in overrides or []:
        apply_override(data, *parse_override(item))
    for key, value in (flags or {}).items():
        if value is not None:
            data[key] = value
    return TrainConfig.model_validate(data)


def write_manifest(out_dir: Path, command: str, payload: Dict[str, Any]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    with open(path, 'w') as f:
        json.dump({"command": command, **payload}, f, indent=2, sort_keys=True, default=str)
    return path


def train_manifest(cfg: TrainConfig) -> Dict[str, Any]:
    """The resolved TrainConfig, architecture filled in, flat so `train --config` reads it back as-is."""
    model = resolve_model_config(cfg, get_task_spec(cfg.task))
    return cfg.model_copy(update={"model": model}).model_dump(mode="json")


def task_mapping(path: Optional[Path], task: str) -> LabelMapping:
    """The --mapping override when given, else the task's default mapping."""
    if path is None:
        return default_mapping(task)
    mapping = load_mapping(path)
    if mapping.task != task:
        raise ValueError(f"mapping {path} is for task {mapping.task!r}, not {task!r}")
    return mapping


def _parse_size(raw: str) -> Tuple[int, int]:
    try:
        h, w = (int(v) for v in raw.lower().split("x"))
    except ValueError:
        raise typer.BadParameter(f"size {raw!r} must look like HEIGHTxWIDTH, e.g. 256x320")
    return h, w


def _parse_range(raw: str) -> Tuple[int, int]:
    try:
        parts = [int(v) for v in raw.split("-")]
    except ValueError:
        raise typer.BadParameter(f"range {raw!r} must look like LO-HI or N")
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) != 2:
        raise typer.BadParameter(f"range {raw!r} must look like LO-HI or N")
    return parts[0], parts[1]


def _parse_fold(raw: str) -> Optional[int]:
    if raw.strip().lower() == "all":
        return None
    try:
        return int(raw)
    except ValueError:
        raise typer.BadParameter(f"--fold must be a fold index or 'all', got {raw!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
@app.command()
def train(
    task: str = typer.Option(..., "--task", help="binary, parts or type"),
    fold: str = typer.Option(..., "--fold", help="Fold index, or 'all' to run every fold"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="JSON TrainConfig file"),
    data_root: Optional[Path] = typer.Option(None, "--data", help="Dataset root (overrides config)"),
    out_dir: Optional[Path] = typer.Option(None, "--out", help="Checkpoint directory (overrides config)"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="key=value config override, dotted keys allowed"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Number of epochs"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size", help="Minibatch size"),
    learning_rate: Optional[float] = typer.Option(None, "--lr", help="AdamW learning rate"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for init, shuffling, augmentation and folds"),
    device: Optional[str] = typer.Option(None, "--device", help="cpu, cuda or auto"),
    resume: Optional[Path] = typer.Option(None, "--resume", help="Resume from a checkpoint"),
):
    """Train one fold (or every fold) and write checkpoints plus history."""
    fold_index = _parse_fold(fold)
    try:
        task = resolve_task(task)
    except ValueError as e:
        raise typer.BadParameter(str(e))

    try:
        flags = {
            "task": task,
            "fold_index": fold_index,
            "data_root": str(data_root) if data_root else None,
            "checkpoint_dir": str(out_dir) if out_dir else None,
            "epochs": epochs,
            "batch_size": batch_size,
            "learning_rate": learning_rate,
            "seed": seed,
            "device": device,
            "resume_from": str(resume) if resume else None,
        }
        cfg = resolve_train_config(config_path, overrides, flags)
        mapping = default_mapping(task)
        index = load_endovis(cfg.data_root, task)

        if fold_index is None and cfg.split_mode == "kfold":
            if cfg.resume_from is not None:
                _fail("--resume cannot be combined with --fold all")
            histories = []
            base_dir = Path(cfg.checkpoint_dir)
            for f in range(cfg.k):
                fold_cfg = cfg.model_copy(update={"fold_index": f, "checkpoint_dir": base_dir / f"fold-{f}"})
                write_manifest(fold_cfg.checkpoint_dir, "train", train_manifest(fold_cfg))
                console.print(f"[blue]Training fold {f + 1}/{cfg.k}...[/blue]")
                _, history = run_training(fold_cfg, index, mapping=mapping)
                histories.append(history)
            score = cross_validation_score(histories)

            table = Table(title=f"Cross-validation ({task}, k={cfg.k})")
            table.add_column("Fold", style="cyan")
            table.add_column("Best epoch", style="magenta")
            table.add_column("Val IoU", style="magenta")
            table.add_column("Val Dice", style="magenta")
            for f, history in enumerate(histories):
                best = history.best_record()
                table.add_row(str(f), str(history.best_epoch), f"{best.val_iou:.4f}", f"{best.val_dice:.4f}")
            table.add_row("mean", "", f"{score['mean_iou']:.4f}", f"{score['mean_dice']:.4f}")
            console.print(table)
            with open(base_dir / "cv_score.json", 'w') as fh:
                json.dump(score, fh, indent=2, sort_keys=True)
        else:
            if fold_index is None:
                cfg = cfg.model_copy(update={"fold_index": 0})
            write_manifest(Path(cfg.checkpoint_dir), "train", train_manifest(cfg))
            checkpoint, history = run_training(cfg, index, mapping=mapping)
            best = history.best_record()

            table = Table(title=f"Training ({task}, {history.metadata.get('split')})")
            table.add_column("Metric", style="cyan")
            table.add_column("Value", style="magenta")
            table.add_row("Parameters", f"{parameter_count(checkpoint.model):,}")
            table.add_row("Epochs", str(len(history.records)))
            table.add_row("Final train loss", f"{history.records[-1].train_loss:.6f}" if history.records else "n/a")
            table.add_row("Best epoch", str(history.best_epoch))
            if best is not None and best.val_iou is not None:
                table.add_row("Best val IoU", f"{best.val_iou:.4f}")
                table.add_row("Best val Dice", f"{best.val_dice:.4f}")
            console.print(table)
            console.print(f"Best checkpoint: {checkpoint.best_path}")
            console.print(f"Last checkpoint: {checkpoint.last_path}")
    except (typer.Exit, UsageError):
        raise
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    console.print("\n[bold green]Training completed![/bold green]")


@app.command()
def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint to evaluate"),
    data_root: Path = typer.Option(Path(DEFAULT_DATA_ROOT), "--data", help="Dataset root with ground truth"),
    task: Optional[str] = typer.Option(None, "--task", help="Defaults to the task recorded in the checkpoint"),
    out_dir: Path = typer.Option(Path("reports"), "--out", help="Output directory for report files"),
    formats: str = typer.Option("csv,json,markdown", "--format", help="Comma-separated: csv, json, markdown"),
    label: str = typer.Option("test", "--label", help="Report label, e.g. fold-0-of-4 or test"),
    mapping_path: Optional[Path] = typer.Option(None, "--mapping", help="JSON label mapping override"),
    strict: bool = typer.Option(True, "--strict/--non-strict", help="Fail on unknown raw mask values"),
):
    """Evaluate a checkpoint on a labelled dataset and export reports."""
    try:
        wanted = resolve_formats(formats)
    except ValueError as e:
        raise typer.BadParameter(str(e))

    try:
        model, _, history = load_checkpoint(checkpoint)
        recorded = history.metadata.get("task") if history else None
        spec = get_task_spec(task or recorded)
        mapping = task_mapping(mapping_path, spec.kind)
        index = load_endovis(data_root, spec.kind)
        report = run_evaluation(
            model, index, spec, stats_from_history(history), mapping=mapping, strict=strict, label=label
        )

        written = [export_report(report, fmt, out_dir / REPORT_FILENAMES[fmt]) for fmt in wanted]
        write_manifest(
            out_dir,
            "evaluate",
            {"checkpoint": str(checkpoint), "data": str(data_root), "task": spec.kind, "formats": wanted, "label": label, "strict": strict},
        )
    except (typer.Exit, UsageError):
        raise
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    table = Table(title=f"Evaluation ({spec.kind}, {label})")
    table.add_column("Video", style="cyan")
    table.add_column("Images", style="magenta")
    table.add_column("mIOU", style="magenta")
    for group in report.groups:
        table.add_row(group.video_id, str(group.count), f"{group.mean_iou:.3f}")
    table.add_row("IOU(%)", str(len(report.per_image)), format_mean_std(report.mean_iou, report.std_iou))
    table.add_row("Dice(%)", str(len(report.per_image)), format_mean_std(report.mean_dice, report.std_dice))
    console.print(table)
    for path in written:
        console.print(f"Report: {path}")
    console.print("\n[bold green]Evaluation completed![/bold green]")


@app.command()
def predict(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint to run"),
    frames: Path = typer.Option(..., "--frames", help="Directory of frames (or a <video> dir with frames/)"),
    out_dir: Path = typer.Option(Path("predictions"), "--out", help="Output directory for masks"),
    task: Optional[str] = typer.Option(None, "--task", help="Defaults to the task recorded in the checkpoint"),
    full_canvas: bool = typer.Option(False, "--full-canvas", help="Re-embed masks into the 1920x1080 frame"),
    color: bool = typer.Option(True, "--color/--no-color", help="Also write colorized masks"),
    mapping_path: Optional[Path] = typer.Option(None, "--mapping", help="JSON label mapping override for the raw values written"),
):
    """Write predicted masks (raw label values, plus colorized copies) for a frame directory."""
    try:
        model, _, history = load_checkpoint(checkpoint)
        spec = get_task_spec(task or (history.metadata.get("task") if history else None))
        index = index_frames(frames, spec.kind)
        mapping = task_mapping(mapping_path, spec.kind)
        records = predict_index(model, index, spec, stats_from_history(history), with_ground_truth=False)
        written = write_predictions(records, out_dir, mapping, colorize=color, full_canvas=full_canvas)
        write_manifest(
            out_dir,
            "predict",
            {
                "checkpoint": str(checkpoint),
                "frames": str(frames),
                "task": spec.kind,
                "full_canvas": full_canvas,
                "color": color,
                "mapping": str(mapping_path) if mapping_path else None,
            },
        )
    except (typer.Exit, UsageError):
        raise
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    console.print(f"[bold green]Wrote {len(written)} mask files for {len(records)} frames to {out_dir}[/bold green]")


@app.command()
def colorize(
    masks: Path = typer.Option(..., "--masks", help="Directory of raw-value mask PNGs"),
    task: str = typer.Option(..., "--task", help="binary, parts or type"),
    out_dir: Path = typer.Option(..., "--out", help="Output directory for colorized PNGs"),
    strict: bool = typer.Option(True, "--strict/--non-strict", help="Fail on unknown raw mask values"),
):
    """Colorize raw-value masks with the task palette."""
    try:
        task = resolve_task(task)
    except ValueError as e:
        raise typer.BadParameter(str(e))

    try:
        if not masks.is_dir():
            raise FileNotFoundError(f"mask directory {masks} does not exist")
        mask_files = sorted(masks.glob("*.png"))
        if not mask_files:
            raise FileNotFoundError(f"no .png masks found in {masks}")
        mapping = default_mapping(task)
        for mask_file in track(mask_files, description="Colorizing masks..."):
            with Image.open(mask_file) as m:
                raw = np.asarray(m, dtype=np.uint8)
            write_color_png(encode_mask(raw, mapping, strict=strict), task, out_dir / mask_file.name)
        write_manifest(out_dir, "colorize", {"masks": str(masks), "task": task, "strict": strict})
    except (typer.Exit, UsageError):
        raise
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    console.print(f"[bold green]Colorized {len(mask_files)} masks into {out_dir}[/bold green]")


@app.command()
def synth(
    out_dir: Path = typer.Option(..., "--out", help="Output dataset root"),
    images: int = typer.Option(8, "--images", help="Number of images"),
    size: str = typer.Option("256x320", "--size", help="HEIGHTxWIDTH, both divisible by 32"),
    task: str = typer.Option("binary", "--task", help="binary, parts or type"),
    seed: int = typer.Option(0, "--seed", help="Generator seed"),
    videos: int = typer.Option(8, "--videos", help="Spread images over this many videos"),
    instruments: str = typer.Option("1-3", "--instruments", help="Instruments per image, LO-HI"),
    probe: bool = typer.Option(False, "--probe", help="Also draw probe shapes"),
):
    """Write a deterministic synthetic dataset in the EndoVis layout."""
    height, width = _parse_size(size)
    try:
        spec = SynthSpec(
            num_images=images,
            height=height,
            width=width,
            instruments_per_image=_parse_range(instruments),
            seed=seed,
            task=resolve_task(task),
            num_videos=videos,
            include_probe=probe,
        )
    except ValueError as e:
        raise typer.BadParameter(str(e))

    try:
        index = write_dataset(generate_synthetic(spec), out_dir, spec.task)
        write_manifest(out_dir, "synth", {"spec": spec.model_dump(mode="json")})
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    table = Table(title=f"Synthetic dataset ({spec.task})")
    table.add_column("Video", style="cyan")
    table.add_column("Frames", style="magenta")
    for video_id, count in index.counts().items():
        table.add_row(video_id, str(count))
    console.print(table)
    console.print(f"[bold green]Wrote {len(index.samples)} samples to {out_dir}[/bold green]")


@app.command()
def folds(
    data_root: Optional[Path] = typer.Option(None, "--data", help="Dataset root to read video ids from"),
    videos: Optional[str] = typer.Option(None, "--videos", help="Comma-separated video ids"),
    k: int = typer.Option(4, "--k", help="Number of folds"),
    seed: int = typer.Option(0, "--seed", help="Shuffle seed"),
    task: str = typer.Option("binary", "--task", help="Task whose ground truth must exist under --data"),
    out_dir: Path = typer.Option(Path("runs/folds"), "--out", help="Directory for the run manifest"),
):
    """Print the deterministic video -> fold assignment and record it in a run manifest."""
    if (data_root is None) == (videos is None):
        raise typer.BadParameter("give exactly one of --data or --videos")

    try:
        if videos is not None:
            video_ids = [v.strip() for v in videos.split(",") if v.strip()]
        else:
            video_ids = load_endovis(data_root, resolve_task(task), require_masks=False).video_ids
        splits = kfold_split(video_ids, k, seed)
        write_manifest(
            out_dir,
            "folds",
            {
                "videos": sorted(video_ids),
                "k": k,
                "seed": seed,
                "data": str(data_root) if data_root else None,
                "assignments": splits[0].assignments,
            },
        )
    except (ValueError, RuntimeError, OSError) as e:
        _fail(str(e))

    table = Table(title=f"{k}-fold assignment (seed={seed})")
    table.add_column("Video", style="cyan")
    table.add_column("Fold", style="magenta")
    for video_id in sorted(splits[0].assignments):
        table.add_row(video_id, str(splits[0].assignments[video_id]))
    console.print(table)


def run(argv: Optional[List[str]] = None) -> int:
    """Entry point returning an exit code: 0 success, 1 usage error, 2 runtime failure."""
    try:
        result = app(args=argv, prog_name="nestedu", standalone_mode=False)
    except UsageError as e:
        e.show()
        return 1
    except typer.Exit as e:
        return e.exit_code
    except typer.Abort:
        return 1
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(run())
