"""
Common utilities shared across the project.

This module provides shared functionality for logging and environment
management used by the library code, the CLI and the tests.
"""

from .logger_utils import create_logger
from .env_utils import load_env_variables, default_output_dir, progress_enabled

__all__ = [
    'create_logger',
    'load_env_variables',
    'default_output_dir',
    'progress_enabled',
]
