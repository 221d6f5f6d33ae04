"""Process-wide logging setup from the ``logging`` config group."""

from collections.abc import Mapping
import logging
import logging.config
from typing import Any

from omegaconf import DictConfig, OmegaConf


def setup_logging(
    cfg: DictConfig | Mapping[str, Any] | None = None, level: str | None = None
) -> None:
    """Apply a ``dictConfig`` schema, optionally overriding the root level."""
    if cfg is None:
        from .config_utils import load_config

        cfg = load_config().logging
    schema = (
        OmegaConf.to_container(cfg, resolve=True)
        if isinstance(cfg, DictConfig)
        else dict(cfg)
    )
    assert isinstance(schema, dict)  # noqa: S101
    if level is not None:
        root = dict(schema.get("root", {}))
        root["level"] = level.upper()
        schema["root"] = root
    logging.config.dictConfig(schema)
    logging.captureWarnings(True)
