"""
Runtime settings.

Values come from environment variables so that the MCP server can be
configured from a client config file (the ``env`` block) and the bench CLI
can be tuned without flags. CLI flags always win over settings.
"""

import logging
import os
import sys
from collections.abc import Mapping

from pydantic import BaseModel, Field, field_validator

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_TRUTHY = {"1", "true", "yes", "on"}


class Settings(BaseModel):
    """Process-wide defaults"""

    log_level: str = "INFO"
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    cache_elems: int = Field(default=3 * 2**12, ge=3)
    validate_inputs: bool = False

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level: {value}")
        return level

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "Settings":
        env = os.environ if environ is None else environ
        values: dict[str, object] = {}
        if "LOG_LEVEL" in env:
            values["log_level"] = env["LOG_LEVEL"]
        if "MERGEPATH_THREADS" in env:
            values["threads"] = int(env["MERGEPATH_THREADS"])
        if "MERGEPATH_CACHE_ELEMS" in env:
            values["cache_elems"] = int(env["MERGEPATH_CACHE_ELEMS"])
        if "MERGEPATH_VALIDATE" in env:
            values["validate_inputs"] = env["MERGEPATH_VALIDATE"].lower() in _TRUTHY
        return cls.model_validate(values)


def configure_logging(level: str) -> None:
    """Send log records to stderr; stdout carries reports and the MCP transport"""
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
