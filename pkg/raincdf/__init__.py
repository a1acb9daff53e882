"""Probabilistic hourly rainfall prediction from radar features."""

__version__ = "1.0.0"
