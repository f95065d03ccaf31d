"""Convert public citation-graph datasets into the GRPH container."""

from .convert import (DATASETS, ConversionError, SplitSpec, clean_adjacency,
                      convert, load_archive, make_masks, sha256_file, verify)
from .grphio import GRAPH_SECTIONS, GrphFormatError, read_sections, write_graph

__version__ = "0.1.0"

__all__ = [
    "DATASETS", "ConversionError", "SplitSpec", "clean_adjacency", "convert",
    "load_archive", "make_masks", "sha256_file", "verify", "GRAPH_SECTIONS",
    "GrphFormatError", "read_sections", "write_graph", "__version__",
]
