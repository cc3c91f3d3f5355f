"""Reconfigurable atomic read/write storage: protocols, simulator, checkers."""

__version__ = "0.1.0"
