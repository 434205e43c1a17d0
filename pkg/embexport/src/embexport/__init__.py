from .exporter import (ExportError, encode_names, export, load_encoder,
                       read_names, write_embedding_file)
from .pinned import PINNED_SEED, materialize, revision_of

__version__ = "0.1.0"
__all__ = ["ExportError", "encode_names", "export", "load_encoder",
           "read_names", "write_embedding_file", "PINNED_SEED",
           "materialize", "revision_of", "__version__"]
