# Environment-level settings for the command-line pipeline.

import os
from dotenv import load_dotenv, find_dotenv

# these look for a .env file in the working directory or any parent.
# the format for that file is (without the comment)
#CBO_OUTPUT_DIR=generated_runs

DEFAULT_OUTPUT_DIR = "generated_runs"


def load_env():
    _ = load_dotenv(find_dotenv(usecwd=True))


def get_output_dir() -> str:
    load_env()
    return os.getenv("CBO_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR


def get_default_jobs() -> int:
    load_env()
    raw = os.getenv("CBO_JOBS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def get_quiet() -> bool:
    load_env()
    return os.getenv("CBO_QUIET", "").strip().lower() in ("1", "true", "yes", "on")
