"""Sentence-level machine translation quality estimation."""

__version__ = "0.1.0"
