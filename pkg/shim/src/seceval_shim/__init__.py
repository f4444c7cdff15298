"""Interpreter-side test shim speaking the one-message stdout protocol."""

from .runner import main, run

__all__ = ["main", "run"]
