"""Classifier checkpoints: ``model.pt`` state dict plus a ``meta.json`` sibling."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from src.cskd.errors import ArtifactMissingError, ConfigurationError
from src.cskd.models.classifiers import Classifier, ClassifierSpec, build_classifier
from src.cskd.utils import PathLike, replace_directory, write_file_synced

logger = logging.getLogger(__name__)

WEIGHTS = "model.pt"
META = "meta.json"


def save_checkpoint(
    model: Classifier,
    directory: PathLike,
    *,
    seed: int,
    train_hash: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write ``model`` to ``directory`` through a staged directory swap.

    Args:
        model: The classifier to persist.
        directory: Target directory; replaced if it already exists.
        seed: Seed the model was trained with.
        train_hash: Fingerprint of the training set.
        extra: Additional JSON-compatible fields for ``meta.json``.

    Returns:
        The checkpoint directory.
    """
    meta = {
        "arch_id": model.arch_id,
        "nc": model.num_classes,
        "input_shape": list(model.input_shape),
        "feat_dim": model.feat_dim,
        "seed": seed,
        "train_hash": train_hash,
        "normalization": {
            "mean": model.norm_mean.flatten().tolist(),
            "std": model.norm_std.flatten().tolist(),
        },
    }
    meta.update(extra or {})
    with replace_directory(directory) as staging:
        state = {k: v.detach().cpu() for k, v in model.state_dict().items()}
        torch.save(state, staging / WEIGHTS)
        write_file_synced(staging / META, json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"))
    logger.info("saved %s checkpoint to %s", model.arch_id, directory)
    return Path(directory)


def read_meta(directory: PathLike) -> Dict[str, Any]:
    path = Path(directory) / META
    if not path.is_file():
        raise ArtifactMissingError(f"checkpoint meta not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_checkpoint(directory: PathLike, device: str | torch.device = "cpu") -> Tuple[Classifier, Dict[str, Any]]:
    """Rebuild a classifier from ``directory`` and return it with its meta."""
    meta = read_meta(directory)
    weights = Path(directory) / WEIGHTS
    if not weights.is_file():
        raise ArtifactMissingError(f"checkpoint weights not found: {weights}")
    try:
        spec = ClassifierSpec(arch_id=meta["arch_id"], num_classes=int(meta["nc"]), input_shape=tuple(meta["input_shape"]))
    except KeyError as e:
        raise ConfigurationError(f"checkpoint meta {directory} lacks field {e}") from e
    model = build_classifier(spec)
    model.load_state_dict(torch.load(weights, map_location="cpu", weights_only=True))
    model.to(device).eval()
    return model, meta
