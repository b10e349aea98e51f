"""Condensed-set directory format.

A set is stored as three files:

- ``meta.json``: format version, dataset name, nc, spc, shape, dtypes,
  normalisation, source and per-file SHA-256 checksums.
- ``images.bin``: N*C*H*W little-endian float32, record-major.
- ``labels.bin``: N little-endian int64.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from src.cskd.errors import ArtifactMissingError, CondensedFormatError
from src.cskd.guidance.dataset import LabeledImageSet, SetMeta
from src.cskd.utils import PathLike, replace_directory, sha256_bytes, write_file_synced

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
META_FILE = "meta.json"
IMAGES_FILE = "images.bin"
LABELS_FILE = "labels.bin"
IMAGE_DTYPE = "<f4"
LABEL_DTYPE = "<i8"


def _encode(data: LabeledImageSet) -> tuple[bytes, bytes]:
    images = np.ascontiguousarray(data.images.detach().cpu().numpy(), dtype=IMAGE_DTYPE).tobytes()
    labels = np.ascontiguousarray(data.labels.detach().cpu().numpy(), dtype=LABEL_DTYPE).tobytes()
    return images, labels


def save_condensed(data: LabeledImageSet, path: PathLike) -> Path:
    """Write ``data`` to the directory ``path``, replacing it through a staged swap.

    Every file is fsynced before the staging directory is renamed into place.

    Raises:
        CondensedFormatError: the set is empty or violates its invariants.
    """
    if len(data) == 0:
        raise CondensedFormatError("empty set not serializable")
    data.validate()
    images, labels = _encode(data)
    meta: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "dataset_name": data.meta.dataset_name,
        "nc": data.meta.num_classes,
        "spc": data.meta.spc,
        "shape": list(data.shape),
        "dtype": "f32le",
        "label_dtype": "i64le",
        "normalization": {"mean": list(data.meta.mean), "std": list(data.meta.std)},
        "source": data.meta.source,
        "sha256": {"images": sha256_bytes(images), "labels": sha256_bytes(labels)},
    }
    with replace_directory(path) as staging:
        write_file_synced(staging / IMAGES_FILE, images)
        write_file_synced(staging / LABELS_FILE, labels)
        write_file_synced(staging / META_FILE, json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"))
    logger.info("saved %d-record %s set to %s", len(data), data.meta.source, path)
    return Path(path)


def _read_meta(directory: Path) -> Dict[str, Any]:
    meta_path = directory / META_FILE
    if not meta_path.is_file():
        raise ArtifactMissingError(f"condensed set not found: {meta_path} is missing")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CondensedFormatError(f"{meta_path} is not valid JSON: {e}") from e
    required = ("format_version", "dataset_name", "nc", "spc", "shape", "dtype", "label_dtype", "sha256")
    missing = [key for key in required if key not in meta]
    if missing:
        raise CondensedFormatError(f"{meta_path} lacks field(s) {', '.join(missing)}")
    if meta["format_version"] != FORMAT_VERSION:
        raise CondensedFormatError(f"unsupported format_version {meta['format_version']} (expected {FORMAT_VERSION})")
    if meta["dtype"] != "f32le" or meta["label_dtype"] != "i64le":
        raise CondensedFormatError(f"unsupported dtypes {meta['dtype']}/{meta['label_dtype']}")
    return meta


def _read_exact(path: Path, expected: int) -> bytes:
    if not path.is_file():
        raise ArtifactMissingError(f"condensed set file missing: {path}")
    raw = path.read_bytes()
    if len(raw) != expected:
        raise CondensedFormatError(f"{path.name} holds {len(raw)} bytes, expected {expected} bytes")
    return raw


def load_condensed(path: PathLike) -> LabeledImageSet:
    """Read a set written by :func:`save_condensed`.

    Sizes are checked first, then checksums, then the container invariants.

    Raises:
        ArtifactMissingError: a file is missing.
        CondensedFormatError: size or checksum mismatch, or an invariant
            (spc, label range, pixel range) does not hold.
    """
    directory = Path(path)
    meta = _read_meta(directory)
    channels, height, width = (int(v) for v in meta["shape"])
    # the record count comes from the images file; labels must agree with it
    images_path = directory / IMAGES_FILE
    if not images_path.is_file():
        raise ArtifactMissingError(f"condensed set file missing: {images_path}")
    record_bytes = 4 * channels * height * width
    images_size = images_path.stat().st_size
    if record_bytes == 0 or images_size % record_bytes:
        raise CondensedFormatError(
            f"{IMAGES_FILE} holds {images_size} bytes, not a multiple of the {record_bytes}-byte record size"
        )
    n = images_size // record_bytes
    labels_raw = _read_exact(directory / LABELS_FILE, 8 * n)
    images_raw = _read_exact(images_path, record_bytes * n)

    if sha256_bytes(images_raw) != meta["sha256"].get("images"):
        raise CondensedFormatError(f"checksum mismatch in {images_path}")
    if sha256_bytes(labels_raw) != meta["sha256"].get("labels"):
        raise CondensedFormatError(f"checksum mismatch in {directory / LABELS_FILE}")

    images = torch.from_numpy(
        np.frombuffer(images_raw, dtype=IMAGE_DTYPE).astype(np.float32).reshape(n, channels, height, width)
    )
    labels = torch.from_numpy(np.frombuffer(labels_raw, dtype=LABEL_DTYPE).astype(np.int64))
    norm = meta.get("normalization") or {}
    set_meta = SetMeta(
        dataset_name=meta["dataset_name"],
        num_classes=int(meta["nc"]),
        spc=None if meta["spc"] is None else int(meta["spc"]),
        mean=tuple(norm.get("mean", (0.0,) * channels)),
        std=tuple(norm.get("std", (1.0,) * channels)),
        source=meta.get("source", "condensed"),
    )
    data = LabeledImageSet(images, labels, set_meta)
    logger.info("loaded %d-record %s set from %s", n, set_meta.source, directory)
    return data
