"""Tests for Sentry initialization"""
from unittest.mock import patch

from stvad.exception_capture import init_sentry
from stvad.monitor import get_version


def test_init_sentry(monkeypatch):
    monkeypatch.setenv("STVAD_SENTRY_DEBUG", "true")
    with patch("stvad.exception_capture.sentry_sdk.init") as mock_init:
        init_sentry()
    mock_init.assert_called_once_with(
        release=get_version().get("commit", None), debug=True, send_default_pii=False
    )


def test_init_sentry_with_bad_settings(monkeypatch):
    monkeypatch.setenv("STVAD_SEED", "not a number")
    with patch("stvad.exception_capture.sentry_sdk.init") as mock_init:
        init_sentry()
    assert mock_init.call_args.kwargs["debug"] is False
