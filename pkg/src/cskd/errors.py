"""Exception hierarchy shared by every cskd sub-package.

Library code raises these; only the command-line layer turns them into
messages and exit codes.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional


class CSKDError(Exception):
    """Base class for all errors raised by cskd."""


class ConfigurationError(CSKDError, ValueError):
    """A configuration value or combination of values is invalid."""


class RegistryError(CSKDError, KeyError):
    """An identifier is not present in a registry."""

    def __init__(self, kind: str, name: str, valid: Iterable[str]) -> None:
        self.kind = kind
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"unknown {kind} '{name}'; valid ids: {', '.join(self.valid)}")

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return self.args[0]


class DimensionError(CSKDError, ValueError):
    """Tensor shapes or layer layouts do not line up."""


class NumericalError(CSKDError, ArithmeticError):
    """A loss or feature became non-finite.

    Attributes:
        components: Component losses at the time of failure, when known.
        index: Offending batch/record index, when known.
    """

    def __init__(
        self,
        message: str,
        components: Optional[Mapping[str, float]] = None,
        index: Optional[int] = None,
    ) -> None:
        self.components = dict(components or {})
        self.index = index
        detail = ""
        if self.components:
            detail += " components: " + ", ".join(f"{k}={v:.6g}" for k, v in self.components.items())
        if index is not None:
            detail += f" (batch index {index})"
        super().__init__(message + detail)


class CondensedFormatError(CSKDError, ValueError):
    """A condensed-set directory is malformed, corrupted or violates its invariants."""


class InsufficientDataError(CSKDError, ValueError):
    """Some classes hold fewer records than requested."""

    def __init__(self, message: str, deficient: Mapping[int, int]) -> None:
        self.deficient = dict(deficient)
        listing = ", ".join(f"class {c}: {n}" for c, n in sorted(self.deficient.items()))
        super().__init__(f"{message} (deficient classes -> {listing})")


class EmptyPoolError(CSKDError, LookupError):
    """Sampling was requested from a pool with no entries."""


class ArtifactMissingError(CSKDError, FileNotFoundError):
    """A checkpoint, dataset archive or condensed set is not where the config says."""
