"""Logging configuration for the command line and long training runs"""

import logging
import logging.config
from typing import Any, Dict, List

import structlog
from structlog.types import Processor

# stdout is reserved for `stvad score` CSV output
STREAM = "ext://sys.stderr"


def pre_chain(use_mozlog: bool) -> List[Processor]:
    """Processors that stdlib records also pass through before formatting."""
    if use_mozlog:
        return []
    return [
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
    ]


def handler_config(formatter: str) -> Dict[str, Any]:
    return {
        "class": "logging.StreamHandler",
        "formatter": formatter,
        "level": "DEBUG",
        "stream": STREAM,
    }


def logging_dict(use_mozlog: bool, logging_level: str) -> Dict[str, Any]:
    handler = "mozlog" if use_mozlog else "humans"
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "dev_console": {
                "()": structlog.stdlib.ProcessorFormatter,
                "processor": structlog.dev.ConsoleRenderer(colors=True),
                "foreign_pre_chain": pre_chain(use_mozlog),
            },
            "mozlog_json": {
                "()": "dockerflow.logging.JsonLogFormatter",
                "logger_name": "stvad",
            },
        },
        "handlers": {
            "humans": handler_config("dev_console"),
            "mozlog": handler_config("mozlog_json"),
        },
        "loggers": {
            "stvad": {
                "propagate": False,
                "handlers": [handler],
                "level": logging_level,
            },
            # torch and numpy warnings, once captureWarnings is on
            "py.warnings": {
                "propagate": False,
                "handlers": [handler],
                "level": "WARNING",
            },
        },
        "root": {"handlers": [handler], "level": "WARNING"},
    }


def configure_logging(use_mozlog: bool = False, logging_level: str = "INFO") -> None:
    """Configure Python logging.

    :param use_mozlog: If True, emit JSON MozLog lines for a log pipeline.
        If False, format logs for human consumption.
    :param logging_level: The level for stvad loggers, such as DEBUG or INFO.
    """
    logging.config.dictConfig(logging_dict(use_mozlog, logging_level))
    logging.captureWarnings(True)

    if use_mozlog:
        render: Processor = structlog.stdlib.render_to_log_kwargs
    else:
        render = structlog.stdlib.ProcessorFormatter.wrap_for_formatter
    processors: List[Processor] = [
        structlog.stdlib.filter_by_level,
        *pre_chain(use_mozlog),
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        render,
    ]
    structlog.configure(
        processors=processors,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
