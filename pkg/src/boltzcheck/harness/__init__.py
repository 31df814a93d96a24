"""Scenario configuration, verification drivers, reports and the command line."""

from .cli import main

__all__ = ["main"]
