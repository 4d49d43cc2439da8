"""chaninc - deciding, certifying and quantifying Shannon inclusion between DMCs."""

from src._version import __version__

__all__ = ["__version__"]
