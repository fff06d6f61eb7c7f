"""Entry point and environment settings."""
import logging
import os

import pytest

from src.core.app import Settings, configure_logging, load_settings
from src.core.errors import ConfigError


def test_entry_point_importable():
    import app  # noqa: F401
    from src.core.cli import main, run
    assert callable(main)
    assert callable(run)


def test_settings_defaults(monkeypatch, tmp_path):
    monkeypatch.delenv("CANDI_LAB_THREADS", raising=False)
    monkeypatch.delenv("CANDI_LAB_LOG_LEVEL", raising=False)
    assert load_settings(str(tmp_path / "none.env")) == Settings()


def test_settings_from_env_file(monkeypatch, tmp_path):
    monkeypatch.delenv("CANDI_LAB_THREADS", raising=False)
    monkeypatch.delenv("CANDI_LAB_LOG_LEVEL", raising=False)
    env = tmp_path / ".env"
    env.write_text("CANDI_LAB_THREADS=4\nCANDI_LAB_LOG_LEVEL=debug\n", encoding="utf-8")
    try:
        settings = load_settings(str(env))
    finally:
        os.environ.pop("CANDI_LAB_THREADS", None)
        os.environ.pop("CANDI_LAB_LOG_LEVEL", None)
    assert settings == Settings(threads=4, log_level="DEBUG")


@pytest.mark.parametrize("name, value", [("CANDI_LAB_THREADS", "0"), ("CANDI_LAB_THREADS", "many"),
                                         ("CANDI_LAB_LOG_LEVEL", "LOUD")])
def test_invalid_settings(monkeypatch, tmp_path, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigError):
        load_settings(str(tmp_path / "none.env"))


def test_configure_logging_sets_the_root_level():
    configure_logging("WARNING")
    root = logging.getLogger()
    assert root.level == logging.WARNING
    for handler in list(root.handlers):
        root.removeHandler(handler)
