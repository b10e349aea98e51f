"""Command-line surface of the toolkit."""

from src.cskd.cli.context import (
    DatasetContext,
    GuidanceContext,
    HarnessContext,
    RunConfig,
    StudentContext,
    TeacherContext,
)
from src.cskd.cli.commands import COMMANDS, build_parser, main, parse_guidance_flag, resolve_config

__all__ = [
    "DatasetContext",
    "GuidanceContext",
    "HarnessContext",
    "RunConfig",
    "StudentContext",
    "TeacherContext",
    "COMMANDS",
    "build_parser",
    "main",
    "parse_guidance_flag",
    "resolve_config",
]
