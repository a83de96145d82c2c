"""
Runtime settings.

Values come from GCLBENCH_* environment variables or a local .env file.
Experiment-level configuration lives in gclbench.configs instead.
"""

import logging
from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class BenchmarkSettings(BaseSettings):
    """Process-wide knobs that do not change experiment results."""

    model_config = SettingsConfigDict(env_prefix="GCLBENCH_", env_file=".env", extra="ignore")

    workers: int = Field(default=1, ge=1, description="Parallel workers used by sweeps")
    precision: Literal["float64", "float32"] = Field(
        default="float64", description="Floating point width for training runs"
    )
    log_level: str = Field(default="INFO", description="Root logging level")


@lru_cache(maxsize=1)
def get_settings() -> BenchmarkSettings:
    """Get or create the global settings object."""
    settings = BenchmarkSettings()
    logger.debug(f"Loaded settings: {settings.model_dump()}")
    return settings


def configure_logging(level: str = "") -> None:
    """Configure root logging. Only the process entry point should call this."""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format=LOG_FORMAT,
        force=True,
    )
