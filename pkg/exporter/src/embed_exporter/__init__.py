"""Turn class-label names into prompt-averaged text embeddings on disk."""

from .encoders import EncoderUnavailableError, resolve_encoder
from .export import EmptyNamesError, ExportJob, default_templates, export

__version__ = "0.1.0"
__all__ = [
    "EncoderUnavailableError",
    "EmptyNamesError",
    "ExportJob",
    "default_templates",
    "export",
    "resolve_encoder",
]
