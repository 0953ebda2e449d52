class EntplanError(Exception):
    """Base class for user-facing errors raised by this package."""
