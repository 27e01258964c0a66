"""Runtime limits and defaults.

Values come from (lowest to highest precedence) the built-in defaults, an
optional ``key=value`` config file, and environment variables: ``VECSR_TIMEOUT_S``
(alias ``KBPLAN_TIMEOUT_S``) plus the other ``KBPLAN_*`` names. ``.env`` is
loaded first, as the HTTP service always did.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field

# Later entries win, so VECSR_TIMEOUT_S beats its KBPLAN_ alias.
ENV_OVERRIDES = {
    "KBPLAN_TIMEOUT_S": "wall_timeout_s",
    "VECSR_TIMEOUT_S": "wall_timeout_s",
    "KBPLAN_MAX_DEPTH": "max_depth",
    "KBPLAN_MAX_EXPANSIONS": "max_expansions",
    "KBPLAN_LOG_LEVEL": "log_level",
}


class Settings(BaseModel):
    max_depth: int = Field(default=50, ge=1)
    max_expansions: int = Field(default=100_000, ge=1)
    wall_timeout_s: float = Field(default=600.0, gt=0)
    inference_max_depth: int = Field(default=10_000, ge=10)
    bench_repetitions: int = Field(default=5, ge=1)
    scene_objects: int = Field(default=500, ge=10)
    log_level: str = "INFO"


def load_settings(config_path: str | Path | None = None) -> Settings:
    load_dotenv()
    values: dict[str, Any] = {}
    if config_path is not None:
        for key, value in dotenv_values(config_path).items():
            if value is not None:
                values[key.strip().lower()] = value
    for env_name, field_name in ENV_OVERRIDES.items():
        raw = os.getenv(env_name)
        if raw:
            values[field_name] = raw
    return Settings.model_validate(values)


def configure_logging(settings: Settings, verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
