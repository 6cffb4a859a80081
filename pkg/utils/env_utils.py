"""
Environment utilities for the channel-masking pretraining project.

This module loads the optional .env file and exposes the few environment
switches the project reads.
"""

import os

from dotenv import load_dotenv

OUTPUT_DIR_ENV = "CHANNEL_MASK_OUTPUT_DIR"
PROGRESS_ENV = "CHANNEL_MASK_PROGRESS"


def load_env_variables():
    """
    Load environment variables from a .env file.

    Variables already present in the process environment are not overridden.
    """
    load_dotenv(override=False)


def default_output_dir() -> str:
    """Output directory used when a run config does not name one."""
    return os.getenv(OUTPUT_DIR_ENV, "runs")


def progress_enabled() -> bool:
    """Whether tqdm progress bars should be shown (CHANNEL_MASK_PROGRESS=0 disables them)."""
    return os.getenv(PROGRESS_ENV, "1").strip().lower() not in ("0", "false", "no", "off")
