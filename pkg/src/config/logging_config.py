"""
Logging configuration for the pipeline
One named logger shared by every module: console output for progress,
rotating files for full detail and errors.
"""
import logging
import logging.handlers
from datetime import datetime
from pathlib import Path
from typing import Optional

from src.config.settings import settings

LOGGER_NAME = 'capkit'

DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
SIMPLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _rotating_handler(path: Path, level: int, formatter: logging.Formatter) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(
        path,
        maxBytes=10 * 1024 * 1024,  # 10 MB
        backupCount=5,
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(logs_dir: Optional[Path] = None, debug: Optional[bool] = None) -> logging.Logger:
    """
    Configure the pipeline logger with console, run-log and error-log handlers

    Args:
        logs_dir: directory for log files (defaults to settings.logs_dir)
        debug: lower the logger level to DEBUG (defaults to settings.debug)

    Returns:
        logging.Logger: Configured logger instance
    """
    logs_dir = Path(logs_dir or settings.logs_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)
    debug = settings.debug if debug is None else debug

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG if debug else logging.INFO)
    logger.propagate = False

    # Re-configuration (CLI --config) replaces the import-time handlers
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    detailed_formatter = logging.Formatter(DETAILED_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    simple_formatter = logging.Formatter(SIMPLE_FORMAT, datefmt='%H:%M:%S')

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG if debug else logging.INFO)
    console_handler.setFormatter(simple_formatter)
    logger.addHandler(console_handler)

    stamp = datetime.now().strftime('%Y%m%d')
    logger.addHandler(_rotating_handler(logs_dir / f"capkit_{stamp}.log", logging.DEBUG, detailed_formatter))
    logger.addHandler(_rotating_handler(logs_dir / f"errors_{stamp}.log", logging.ERROR, detailed_formatter))

    return logger


def log_banner(title: str, **fields) -> None:
    """Log a separator block with a title and key/value lines"""
    logger.info('=' * 80)
    logger.info(title)
    logger.info('=' * 80)
    for key, value in fields.items():
        logger.info(f"{key}: {value}")
    if fields:
        logger.info('=' * 80)


# Global logger instance
logger = setup_logging()
