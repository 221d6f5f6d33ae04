"""Hydra configuration loading and environment-driven settings."""

from collections.abc import Sequence
import logging
import os
from pathlib import Path

from hydra import compose, initialize_config_dir
from hydra.core.global_hydra import GlobalHydra
from omegaconf import DictConfig, OmegaConf

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

CONFIG_DIR_ENV = "TRIMIX_CONFIG_DIR"
WORKERS_ENV = "TRIMIX_WORKERS"


def config_dir() -> Path:
    """Directory holding ``config.yaml``.

    Checked in order: the ``TRIMIX_CONFIG_DIR`` variable, the repository
    ``config/`` folder and the copy installed inside the package.
    """
    override = os.environ.get(CONFIG_DIR_ENV)
    if override:
        return Path(override).resolve()
    here = Path(__file__).resolve()
    for candidate in (here.parents[2] / "config", here.parents[1] / "config"):
        if (candidate / "config.yaml").is_file():
            return candidate
    raise ValidationError(f"No config.yaml found; set {CONFIG_DIR_ENV}")


def load_config(
    overrides: Sequence[str] = (), config_name: str = "config"
) -> DictConfig:
    """Compose the configuration tree with optional ``key=value`` overrides."""
    if GlobalHydra.instance().is_initialized():
        GlobalHydra.instance().clear()
    with initialize_config_dir(
        version_base=None, config_dir=str(config_dir()), job_name="trimix"
    ):
        cfg = compose(config_name=config_name, overrides=list(overrides))
    logger.debug("Composed configuration:\n%s", OmegaConf.to_yaml(cfg))
    return cfg


def section(cfg: DictConfig, key: str) -> dict:
    """A resolved plain-dict copy of one config group."""
    group = cfg[key]
    if not isinstance(group, DictConfig):
        raise ValidationError(f"config group '{key}' is not a mapping")
    container = OmegaConf.to_container(group, resolve=True)
    assert isinstance(container, dict)  # noqa: S101
    return {str(k): v for k, v in container.items()}


def worker_count(default: int = 1) -> int:
    """Number of worker processes from ``TRIMIX_WORKERS``."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got '{raw}'") from e
    if value < 1:
        raise ValidationError(f"{WORKERS_ENV} must be >= 1, got {value}")
    return value
