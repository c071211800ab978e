class ExportError(Exception):
    """Anything wrong with inputs, the manifest, or the output."""


class BackendError(ExportError):
    """The requested descriptor backend cannot be used."""
