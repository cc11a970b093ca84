"""Community-level public-safety analytics for municipal open data."""

__version__ = "0.1.0"
