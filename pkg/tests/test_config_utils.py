"""Tests for configuration composition, worker counts and logging setup."""

import logging

import pytest

from src.models.selector import SelectorConfig
from src.utils.config_utils import (
    CONFIG_DIR_ENV,
    WORKERS_ENV,
    config_dir,
    load_config,
    section,
    worker_count,
)
from src.utils.exceptions import ValidationError
from src.utils.logging_utils import setup_logging


class TestLoadConfig:
    def test_groups_are_composed(self):
        cfg = load_config()
        assert set(cfg) >= {"selector", "data_pipeline", "simulation", "logging"}
        assert cfg.selector.mode == "greedy"
        assert cfg.simulation.k == 1000

    def test_selector_group_builds_a_config(self):
        config = SelectorConfig(**section(load_config(), "selector"))
        assert config.max_outer_iter is None
        assert config.outer_cap(7) == 140

    def test_overrides(self):
        cfg = load_config(["selector.delta=0.25", "simulation.replications=3"])
        assert section(cfg, "selector")["delta"] == 0.25
        assert cfg.simulation.replications == 3

    def test_section_must_be_a_mapping(self):
        with pytest.raises(ValidationError, match="mapping"):
            section(load_config(), "output_dir")

    def test_config_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv(CONFIG_DIR_ENV, str(tmp_path))
        assert config_dir() == tmp_path.resolve()


class TestWorkerCount:
    def test_default(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert worker_count() == 1
        assert worker_count(default=3) == 3

    def test_from_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "4")
        assert worker_count() == 4

    @pytest.mark.parametrize("raw", ["many", "0", "-2"])
    def test_bad_values(self, monkeypatch, raw):
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ValidationError, match=WORKERS_ENV):
            worker_count()


def test_setup_logging_overrides_level():
    setup_logging(load_config().logging, "debug")
    assert logging.getLogger().level == logging.DEBUG
    setup_logging(
        {"version": 1, "disable_existing_loggers": False, "root": {"level": "WARNING"}}
    )
    assert logging.getLogger().level == logging.WARNING
