"""
Settings for the laboratory and the structlog setup that goes with them.

Precedence, lowest first: field defaults, ``PROPHETLP_*`` environment variables,
the ``[prophetlp]`` table of ``prophetlp.toml``, then keyword overrides (the CLI flags).
"""
import logging
import pathlib
import sys
from typing import Any, Literal, TextIO
import structlog
import pydantic
import toml  # type: ignore
from pydantic_settings import BaseSettings, SettingsConfigDict

from ._utils import DEFAULT_LP_BUDGET

CONFIG_FILE = "prophetlp.toml"

# file handle of the current log destination, closed on reconfigure
_log_stream: TextIO | None = None

LogLevel = Literal["debug", "info", "warning", "error", "critical"]


class Config(BaseSettings):
    log_level: LogLevel = pydantic.Field(
        "warning",
        description="Lowest level that is emitted.",
    )
    log_file: str = pydantic.Field(
        "STDERR",
        description="Log destination; a path, or STDERR.",
    )
    log_format: Literal["text", "json"] = pydantic.Field(
        "text",
        description="text for key=value (or console) lines, json for one object per line.",
    )
    lp_budget: int = pydantic.Field(
        DEFAULT_LP_BUDGET,
        description="Maximum number of profiles (times subsets for polymatroids) to enumerate.",
        gt=0,
    )
    report_dir: str = pydantic.Field(
        "reports",
        description="Directory that verification reports are written to.",
    )
    model_config = SettingsConfigDict(env_prefix="prophetlp_")

    @pydantic.field_validator("log_level", mode="before")
    @classmethod
    def _lower(cls, value: Any) -> Any:
        return value.lower() if isinstance(value, str) else value


def _file_settings(path: pathlib.Path) -> dict[str, Any]:
    if not path.exists():
        return {}
    return dict(toml.load(path).get("prophetlp", {}))


def _renderer(config: Config, to_stderr: bool) -> Any:
    if config.log_format == "json":
        return structlog.processors.JSONRenderer()
    if to_stderr:
        return structlog.dev.ConsoleRenderer()
    return structlog.processors.KeyValueRenderer(key_order=["level", "event", "timestamp"])


def configure_logging(config: Config) -> None:
    global _log_stream
    if _log_stream is not None:
        _log_stream.close()
        _log_stream = None
    to_stderr = config.log_file == "STDERR"
    if to_stderr:
        stream = sys.stderr
    else:
        stream = _log_stream = open(config.log_file, "w")
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.format_exc_info,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            _renderer(config, to_stderr),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(config.log_level.upper())
        ),
        logger_factory=structlog.PrintLoggerFactory(file=stream),
    )


def load_config(**overrides: Any) -> Config:
    """
    Build the settings and point structlog at the configured destination.
    """
    settings = {**_file_settings(pathlib.Path(CONFIG_FILE)), **overrides}
    config = Config(**settings)
    configure_logging(config)
    return config
