"""Exception types shared across the package.

The command-line layer maps ValidationError (and subclasses) to exit code 1
and OSError to exit code 2; library callers just catch them.
"""


class ValidationError(ValueError):
    """Input data violates a documented contract (bad manifest, bad config,
    unsatisfiable request)."""


class FormatError(ValidationError):
    """A byte stream does not conform to its declared file format."""
