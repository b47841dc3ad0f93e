"""Measure and mitigate name bias in text-embedding models."""

__version__ = "0.1.0"
