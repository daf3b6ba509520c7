"""
Checkpoint archives.

One torch file per checkpoint holding the format version, the model config
(documented key names), the named parameter tensors, the optimizer state
and the training history. Archives are loaded with `weights_only=True`, so
only tensors and plain containers are ever unpickled.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch
from pydantic import ValidationError

from ..schemas import ModelConfig, TrainHistory
from .network import ConfigError, NestedUNet, build_model

logger = logging.getLogger(__name__)


FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint archive is corrupt, truncated, or written by an unsupported format version."""


def save_checkpoint(
    model: NestedUNet,
    optimizer_state: Optional[Dict[str, Any]],
    history: Optional[TrainHistory],
    path: Union[str, Path],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_file_dict(),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "optimizer_state": optimizer_state,
        "history": history.model_dump(mode="json") if history is not None else None,
    }
    # Write then rename so a crash never leaves a half-written archive at `path`.
    tmp = path.with_name(path.name + ".tmp")
    torch.save(archive, tmp)
    os.replace(tmp, path)
    logger.debug(f"saved checkpoint to {path}")
    return path


def read_archive(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"corrupt checkpoint archive {path}: {e}") from e

    if not isinstance(archive, dict) or "format_version" not in archive:
        raise CheckpointError(f"corrupt checkpoint archive {path}: missing format_version")
    version = archive["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}; this build reads version {FORMAT_VERSION}"
        )
    for key in ("config", "state_dict"):
        if key not in archive:
            raise CheckpointError(f"corrupt checkpoint archive {path}: missing {key!r}")
    return archive


def load_checkpoint(
    path: Union[str, Path],
) -> Tuple[NestedUNet, Optional[Dict[str, Any]], Optional[TrainHistory]]:
    """Return (model, optimizer_state, history). Nothing is built unless the whole archive is valid."""
    archive = read_archive(path)
    try:
        config = ModelConfig.model_validate(archive["config"])
        history = TrainHistory.model_validate(archive["history"]) if archive.get("history") else None
        model = build_model(config)
        model.load_state_dict(archive["state_dict"], strict=True)
    except (ValidationError, ConfigError, RuntimeError) as e:
        raise CheckpointError(f"checkpoint {path} does not match its config: {e}") from e
    model.eval()
    return model, archive.get("optimizer_state"), history
