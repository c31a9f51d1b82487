"""Exception hierarchy shared by every subsystem.

Anything deriving from :class:`TwinError` is a *domain* error: the input was
well formed but violates an electrical or protocol rule.  The CLI maps these
to exit code 1.
"""

from __future__ import annotations


class TwinError(Exception):
    """Base class for domain errors."""


class UsageError(TwinError):
    """Malformed user input (CLI maps this to exit code 2)."""
