"""Base exception for everything this package raises on purpose."""


class DriveThruError(Exception):
    """Common ancestor so callers can catch pipeline errors in one clause."""
