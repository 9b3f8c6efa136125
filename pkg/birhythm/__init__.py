"""Rate-induced phase-tipping toolkit for birhythmic oscillators."""

__version__ = "0.1.0"
