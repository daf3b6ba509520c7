import csv
import json
from pathlib import Path
from typing import List, Union

from .schemas import MetricReport


REPORT_FORMATS = ("csv", "json", "markdown")
FORMAT_ALIASES = {"md": "markdown", "markdown-table": "markdown"}
REPORT_FILENAMES = {"csv": "report.csv", "json": "report.json", "markdown": "report.md"}


def format_mean_std(mean: float, std: float) -> str:
    """Percent cell with two decimals, e.g. 0.8294, 0.1682 -> '82.94 ± 16.82'."""
    return f"{mean * 100:.2f} ± {std * 100:.2f}"


def load_json_report(path: Union[str, Path]) -> MetricReport:
    with open(path) as f:
        return MetricReport.model_validate(json.load(f))


class ReportGenerator:
    def __init__(self):
        pass

    def generate_json_output(self, report: MetricReport, output_path: Path):
        with open(output_path, 'w') as f:
            json.dump(report.model_dump(mode='json'), f, indent=2)

    def generate_csv_output(self, report: MetricReport, output_path: Path):
        with open(output_path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['image_id', 'video_id', 'iou', 'dice'])
            for row in report.per_image:
                writer.writerow([row.image_id, row.video_id, repr(row.iou), repr(row.dice)])

    def generate_markdown(self, report: MetricReport, output_path: Path):
        task = report.task or 'unknown'
        label = f" ({report.label})" if report.label else ""

        markdown_content = f"""# Segmentation Report - {task}{label}

## Summary (mean ± std over {len(report.per_image)} images)

| Task | IOU(%) | Dice(%) |
|------|--------|---------|
| {task} | {format_mean_std(report.mean_iou, report.std_iou)} | {format_mean_std(report.mean_dice, report.std_dice)} |

## Per-Video mIOU

| Dataset | Images | mIOU |
|---------|--------|------|
"""
        for group in report.groups:
            markdown_content += f"| {group.video_id} | {group.count} | {group.mean_iou:.3f} |\n"
        markdown_content += f"| **mean** | {len(report.per_image)} | **{report.mean_iou:.3f}** |\n"

        settings = report.settings
        markdown_content += f"""
## Settings
- **Averaging**: {settings.averaging}
- **Std convention**: {settings.std_convention}
- **Skipped classes**: {settings.skip_rule}
- **Epsilon**: {settings.epsilon:g}
"""
        with open(output_path, 'w') as f:
            f.write(markdown_content)


def resolve_formats(raw: str) -> List[str]:
    """Parse a comma-separated format list; raises ValueError on an unsupported entry."""
    formats = []
    for item in raw.split(","):
        name = item.strip().lower()
        if not name:
            continue
        name = FORMAT_ALIASES.get(name, name)
        if name not in REPORT_FORMATS:
            raise ValueError(f"Unsupported report format: {item.strip()!r}. Expected one of {list(REPORT_FORMATS)}.")
        if name not in formats:
            formats.append(name)
    if not formats:
        raise ValueError("no report format given")
    return formats


def export_report(report: MetricReport, fmt: str, output_path: Union[str, Path]) -> Path:
    formats = resolve_formats(fmt)
    if len(formats) != 1:
        raise ValueError(f"export_report writes one format at a time, got {formats}")
    name = formats[0]
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    generator = ReportGenerator()
    if name == "json":
        generator.generate_json_output(report, output_path)
    elif name == "csv":
        generator.generate_csv_output(report, output_path)
    else:
        generator.generate_markdown(report, output_path)
    return output_path
