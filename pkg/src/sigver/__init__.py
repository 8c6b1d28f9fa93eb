"""Offline signature verification: CNN feature learning + per-writer SVMs."""

__version__ = "0.1.0"
