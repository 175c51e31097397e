"""Mobility-model simulation library for studying border effects."""

__version__ = "0.1.0"
