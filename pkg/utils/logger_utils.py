"""
Logging utilities for the channel-masking pretraining project.

This module provides the standardized logger used by every component
(data preparation, pretraining, fine-tuning, protocol runners and the CLI).
"""

import logging
import os
from pathlib import Path

LOGS_DIR_ENV = "CHANNEL_MASK_LOGS_DIR"


def resolve_logs_dir(logs_dir: str = None) -> Path:
    """
    Resolve the directory log files are written to.

    Args:
        logs_dir (str, optional): Explicit directory. When None, the
                                  CHANNEL_MASK_LOGS_DIR environment variable is
                                  used, falling back to '<project root>/logs'.

    Returns:
        Path: The logs directory (not yet created)
    """
    if logs_dir is not None:
        return Path(logs_dir)
    from_env = os.getenv(LOGS_DIR_ENV)
    if from_env:
        return Path(from_env)
    project_root = Path(__file__).resolve().parent.parent
    return project_root / 'logs'


def create_logger(name: str, log_file: str, logs_dir: str = None) -> logging.Logger:
    """
    Create a logger that writes messages both to a log file and to the console.

    Args:
        name (str): Name of the logger
        log_file (str): Name of the log file
        logs_dir (str, optional): Directory to store logs. See resolve_logs_dir.

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)

    # Avoid adding handlers multiple times if logger already exists
    if logger.handlers:
        return logger

    logs_path = resolve_logs_dir(logs_dir)
    logs_path.mkdir(parents=True, exist_ok=True)

    logger.setLevel(logging.INFO)
    logger.propagate = False

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    file_handler = logging.FileHandler(logs_path / log_file, encoding='utf-8')
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger
