"""Functional GUI test generation from retrieved test knowledge."""

__version__ = "0.1.0"
