"""
Task resolution.

`resolve_task` is strict: it RAISES on a missing, empty or unknown task
name instead of falling back to binary. Every subcommand and config path
that names a task goes through it, so a typo fails before any data is read.
"""

from typing import Any, Optional

from .schemas import TASK_NUM_CLASSES, TaskSpec


KNOWN_TASKS = set(TASK_NUM_CLASSES)


def resolve_task(raw: Optional[Any]) -> str:
    """
    Normalise a task name from a flag, config or checkpoint.

    Raises ValueError if the value is missing, empty/whitespace, or not one
    of {binary, parts, type}.
    """
    if raw is None:
        raise ValueError(f"task is required; expected one of {sorted(KNOWN_TASKS)}.")
    resolved = str(raw).strip().lower()
    if not resolved:
        raise ValueError(f"task is empty; expected one of {sorted(KNOWN_TASKS)}.")
    if resolved not in KNOWN_TASKS:
        raise ValueError(f"Unknown task: {raw!r}. Expected one of {sorted(KNOWN_TASKS)}.")
    return resolved


def get_task_spec(kind: str, *, include_background_in_jaccard: bool = False) -> TaskSpec:
    """
    Return the TaskSpec for a task name.

    - "binary" -> 1 logit channel, BCE on logits
    - "parts"  -> 4 channels, cross-entropy
    - "type"   -> 8 channels, cross-entropy
    """
    kind = resolve_task(kind)
    return TaskSpec(
        kind=kind,
        num_classes=TASK_NUM_CLASSES[kind],
        base_loss="bce_logits" if kind == "binary" else "cross_entropy",
        include_background_in_jaccard=include_background_in_jaccard,
    )
