"""Streaming sleep apnea screening monitor."""

__version__ = "0.1.0"
