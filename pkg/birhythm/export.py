"""CSV and manifest writers.

Every artifact is written byte-for-byte reproducibly: floats use ``repr``,
lines end with ``\\n`` and the manifest carries no timestamps.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path

from birhythm import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def format_value(value):
    if isinstance(value, float):
        return repr(float(value))
    return value


def write_csv(path, header, rows):
    """Write ``rows`` under ``header`` and return the path."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    logger.debug("wrote %s", path)
    return path


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_digest(config):
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def write_manifest(directory, command, config, outputs, summary=None):
    """Record the resolved configuration and digests of every output.

    ``config`` must already exclude the worker count, which never changes
    results.
    """
    directory = Path(directory)
    manifest = {
        "toolkit": "birhythm",
        "version": __version__,
        "command": command,
        "config": config,
        "config_hash": config_digest(config),
        "outputs": {Path(path).name: file_digest(path) for path in outputs},
        "summary": summary or {},
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
