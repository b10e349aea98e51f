"""Utility & helper functions."""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterator, Union

import numpy as np
import torch
from torch import nn

PathLike = Union[str, os.PathLike]


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """Derive an independent 31-bit seed from a base seed and a path of keys.

    Args:
        seed: The base seed.
        keys: Integers or strings naming the sub-stream (e.g. "epoch", 3).

    Returns:
        A non-negative integer usable with ``torch.Generator.manual_seed``.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little"))
        else:
            entropy.append(int(key) & 0xFFFFFFFF)
    state = np.random.SeedSequence(entropy).generate_state(1)[0]
    return int(state) & 0x7FFFFFFF


def make_generator(seed: int, device: Union[str, torch.device] = "cpu") -> torch.Generator:
    """Return a ``torch.Generator`` on ``device`` seeded with ``seed``."""
    gen = torch.Generator(device=device)
    gen.manual_seed(int(seed))
    return gen


def configure_determinism() -> None:
    """Put torch into its reproducible configuration."""
    torch.backends.cudnn.deterministic = True
    torch.backends.cudnn.benchmark = False
    torch.use_deterministic_algorithms(True, warn_only=True)


def resolve_device(name: str) -> torch.device:
    """Map ``auto`` to CUDA when available, otherwise pass the name through."""
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def seeded_build(seed: int, factory: Callable[[], nn.Module]) -> nn.Module:
    """Construct a module under its own seed without disturbing the global RNG."""
    devices = [torch.cuda.current_device()] if torch.cuda.is_available() else []
    with torch.random.fork_rng(devices=devices):
        torch.manual_seed(int(seed))
        return factory()


@contextlib.contextmanager
def frozen(*modules: nn.Module) -> Iterator[None]:
    """Temporarily stop gradients from reaching the parameters of ``modules``."""
    saved = []
    for module in modules:
        for param in module.parameters():
            saved.append((param, param.requires_grad))
            param.requires_grad_(False)
    try:
        yield
    finally:
        for param, flag in saved:
            param.requires_grad_(flag)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_json(tree: Any) -> str:
    """Serialize ``tree`` to JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(tree, sort_keys=True, separators=(",", ":"))


def config_hash(tree: Any, length: int = 12) -> str:
    """Short SHA-256 of the canonical JSON form of a config tree."""
    return sha256_bytes(canonical_json(tree).encode("utf-8"))[:length]


def write_file_synced(path: PathLike, data: bytes) -> None:
    with open(path, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())


def fsync_directory(path: PathLike) -> None:
    """Flush directory entries of ``path`` to disk; a no-op where directories cannot be opened."""
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


@contextlib.contextmanager
def replace_directory(path: PathLike) -> Iterator[Path]:
    """Stage a directory next to ``path`` and move it into place on success.

    The swap is two renames, so a crash between them can leave ``path``
    missing with the previous contents under ``.<name>.old-<pid>``. A reader
    never sees a half-written directory at ``path``.

    Yields:
        The staging directory to populate. On error it is discarded and
        ``path`` is left untouched.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}.tmp-", dir=target.parent))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    backup = None
    if target.exists():
        backup = target.parent / f".{target.name}.old-{os.getpid()}"
        os.replace(target, backup)
    try:
        os.replace(staging, target)
    except OSError:
        if backup is not None:
            os.replace(backup, target)
        shutil.rmtree(staging, ignore_errors=True)
        raise
    fsync_directory(target.parent)
    if backup is not None:
        shutil.rmtree(backup, ignore_errors=True)
