import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from .config import LOG_DIR, LOG_LEVEL


def setup_logging(level: Union[str, int] = LOG_LEVEL, log_dir: Optional[Path] = None, to_file: bool = True):
    """Configure the root logger for a CLI run or a test session"""
    # Create formatters
    file_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s - %(message)s'
    )
    console_formatter = logging.Formatter(
        '%(levelname)s - %(name)s.%(funcName)s - %(message)s'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(level if isinstance(level, int) else level.upper())

    # Remove any existing handlers and add our handlers
    root_logger.handlers = []

    if to_file:
        logs_dir = Path(log_dir) if log_dir is not None else LOG_DIR
        logs_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            logs_dir / 'sparse_recovery.log',
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(file_formatter)
        root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(console_formatter)
    root_logger.addHandler(console_handler)
