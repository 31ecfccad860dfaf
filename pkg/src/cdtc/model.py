"""Core vocabulary: content types, performance levels, and the legality matrix.

Learning content is classified along two axes. The content axis says what
kind of thing is being taught (a fact, a concept, a procedure, or a
principle); the performance axis says what the learner must do with it
(remember it, use it, or find/derive something new from it). A matrix cell
is one (content type, performance level) pair. Facts have no abstract
representation to apply or derive, so the use-fact and find-fact cells do
not exist: of the 12 combinations only 10 are legal.

Everything else in the package (objectives, assessments, coverage reports,
mastery tracking, gating) is keyed by these cells.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass


@functools.total_ordering
class _OrderedEnum(enum.Enum):
    """Enum whose members compare by declaration order."""

    def __lt__(self, other):
        if self.__class__ is not other.__class__:
            return NotImplemented
        names = self.__class__._member_names_
        return names.index(self.name) < names.index(other.name)

    @property
    def rank(self) -> int:
        return self.__class__._member_names_.index(self.name)

    def __str__(self) -> str:
        return self.value


class ContentType(_OrderedEnum):
    """The four kinds of learning content, in canonical tie-break order."""

    FACT = "fact"
    CONCEPT = "concept"
    PROCEDURE = "procedure"
    PRINCIPLE = "principle"


class PerformanceLevel(_OrderedEnum):
    """What the learner is asked to do; the order is the gating order."""

    REMEMBER = "remember"
    USE = "use"
    FIND = "find"


class BloomLevel(_OrderedEnum):
    """Bloom's six cognitive levels in increasing order of difficulty."""

    REMEMBERING = "remembering"
    UNDERSTANDING = "understanding"
    APPLYING = "applying"
    ANALYZING = "analyzing"
    EVALUATING = "evaluating"
    CREATING = "creating"


class IllegalCellError(ValueError):
    """Raised for (fact, use) and (fact, find): facts can only be remembered."""

    def __init__(self, content_type: ContentType, performance: PerformanceLevel):
        self.content_type = content_type
        self.performance = performance
        super().__init__(
            f"illegal cell: a {content_type.value} admits no "
            f"{performance.value}-level performance"
        )


def is_legal(content_type: ContentType, performance: PerformanceLevel) -> bool:
    """True for the 10 constructible cells, False for (fact, use) and (fact, find)."""
    return not (
        content_type is ContentType.FACT and performance is not PerformanceLevel.REMEMBER
    )


@dataclass(frozen=True, order=True)
class MatrixCell:
    """A legal (content type, performance level) coordinate.

    Construction of the two illegal pairs raises IllegalCellError, so a
    MatrixCell value is proof of legality.
    """

    content_type: ContentType
    performance: PerformanceLevel

    def __post_init__(self):
        if not is_legal(self.content_type, self.performance):
            raise IllegalCellError(self.content_type, self.performance)

    @property
    def name(self) -> str:
        """Serialized form, e.g. ``"concept/use"``."""
        return f"{self.content_type.value}/{self.performance.value}"

    @classmethod
    def from_name(cls, name: str) -> "MatrixCell":
        type_part, _, level_part = name.partition("/")
        return cls(ContentType(type_part), PerformanceLevel(level_part))

    def __str__(self) -> str:
        return self.name


def make_cell(content_type: ContentType, performance: PerformanceLevel) -> MatrixCell:
    """Build a cell, raising IllegalCellError for the two impossible pairs."""
    return MatrixCell(content_type, performance)


def legal_cells() -> tuple[MatrixCell, ...]:
    """All 10 legal cells, content type major and performance level minor."""
    return _LEGAL_CELLS


_LEGAL_CELLS = tuple(
    MatrixCell(ct, pl)
    for ct in ContentType
    for pl in PerformanceLevel
    if is_legal(ct, pl)
)


# Reporting correspondence between performance levels and Bloom's levels.
# Both orderings are preserved monotonically; gates never consult this.
_BLOOM_BY_PERFORMANCE = {
    PerformanceLevel.REMEMBER: (BloomLevel.REMEMBERING,),
    PerformanceLevel.USE: (BloomLevel.UNDERSTANDING, BloomLevel.APPLYING),
    PerformanceLevel.FIND: (
        BloomLevel.ANALYZING,
        BloomLevel.EVALUATING,
        BloomLevel.CREATING,
    ),
}


def bloom_levels_of(performance: PerformanceLevel) -> tuple[BloomLevel, ...]:
    """Bloom levels covered by a performance level; a partition of all six."""
    return _BLOOM_BY_PERFORMANCE[performance]
