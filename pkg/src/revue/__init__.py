"""Early merge/abandon prediction for Gerrit code changes."""

__version__ = "0.1.0"


class RevueError(Exception):
    """Base class for pipeline errors (mapped to exit code 1 by the CLI)."""
