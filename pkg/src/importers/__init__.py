from .endovis import (
    DatasetLayoutError,
    EndoVisImporter,
    index_frames,
    load_endovis,
    write_dataset,
)
from .synthetic import SyntheticGenerator, generate_synthetic

__all__ = [
    "DatasetLayoutError",
    "EndoVisImporter",
    "index_frames",
    "load_endovis",
    "write_dataset",
    "SyntheticGenerator",
    "generate_synthetic",
]
