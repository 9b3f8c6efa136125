#!/usr/bin/env python
"""Command-line utility for running the birhythm analyses."""

import sys


def main():
    """Run a birhythm subcommand."""
    try:
        from birhythm.cli import main as run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import birhythm. Are its dependencies installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to run `uv sync`?"
        ) from exc
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
