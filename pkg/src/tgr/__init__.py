"""Temporally grounded target recovery for instruction-following robots."""

__version__ = "0.1.0"
