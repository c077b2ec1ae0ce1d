# si_lab/__init__.py
"""Deterministic simulator of MongoDB's transaction protocols with a snapshot-isolation checker."""

__version__ = "0.1.0"
