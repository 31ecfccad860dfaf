"""Courseware compiler and mastery-gated delivery engine.

Content is classified into a content-type x performance-level matrix,
authored in a small DSL, linted against pedagogy rules, compiled into
canonical hash-verified packages, and delivered through a mastery-gated
quiz sequencer with spaced refresher reviews.
"""

from .model import (
    BloomLevel,
    ContentType,
    IllegalCellError,
    MatrixCell,
    PerformanceLevel,
    bloom_levels_of,
    is_legal,
    legal_cells,
    make_cell,
)

__all__ = [
    "BloomLevel",
    "ContentType",
    "IllegalCellError",
    "MatrixCell",
    "PerformanceLevel",
    "bloom_levels_of",
    "is_legal",
    "legal_cells",
    "make_cell",
]

__version__ = "0.1.0"
