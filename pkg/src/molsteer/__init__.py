"""Interactive evolutionary design of small molecules."""

__version__ = "0.1.0"
