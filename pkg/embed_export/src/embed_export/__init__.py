"""Per-face descriptor export in the FSPE1 interchange format."""

from .backends import backend_by_name
from .errors import BackendError, ExportError
from .export import ExportResult, export_manifest

__all__ = ["backend_by_name", "BackendError", "ExportError",
           "ExportResult", "export_manifest"]
