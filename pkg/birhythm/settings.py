"""
Settings for the birhythm toolkit.

Values are read from the environment (optionally through a ``.env`` file at the
repository root). Run-specific choices live in the JSON run configuration, see
``birhythm.config``.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file
load_dotenv(BASE_DIR / ".env")

# Shipped run presets
FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"

OUTPUT_DIR = Path(os.getenv("BIRHYTHM_OUTPUT_DIR", "output"))


# Parallel sweeps

WORKERS = int(os.getenv("BIRHYTHM_WORKERS", str(os.cpu_count() or 1)))


# Integrator defaults

REL_TOL = float(os.getenv("BIRHYTHM_REL_TOL", "1e-9"))
ABS_TOL = float(os.getenv("BIRHYTHM_ABS_TOL", "1e-11"))


# Logging

LOG_LEVEL = os.getenv("BIRHYTHM_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        name: {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False}
        for name in ("birhythm", "oscillators", "tipping")
    },
}
