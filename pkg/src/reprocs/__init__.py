"""Recursive projected compressive sensing (ReProCS) for online robust PCA."""

__version__ = "0.1.0"
