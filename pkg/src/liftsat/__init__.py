"""Lifted group models and fiber-saturated fundamental solutions."""

__version__ = "0.1.0"
