"""In-memory course model produced by the parser and consumed everywhere else.

A course is an ordered list of learning modules; a module is an ordered list
of content items; an item carries the demonstration text shown to the
learner plus its objectives and auto-scorable assessments. All values are
immutable after construction.

Legality of (content type, level) pairs is *not* enforced by these
constructors: the parser blocks illegal pairs structurally and the validator
re-checks them, so that hand-built courses can still be linted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional, Union

from .model import ContentType, MatrixCell, PerformanceLevel, is_legal


class AssessmentKind(enum.Enum):
    MCQ = "mcq"
    CLASSIFY = "classify"
    ORDER = "order"
    TASK = "task"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Objective:
    """Conditions / behavior / criteria triple for one performance level.

    ``given`` is the fixed condition (the stimulus), ``arranged`` the
    optional variable condition (for example "random order").
    """

    level: PerformanceLevel
    given: str
    behavior: str
    criteria: str
    arranged: Optional[str] = None


@dataclass(frozen=True)
class McqPayload:
    options: tuple[str, ...]
    # Indices of options marked correct; legal exactly when there is one.
    correct: tuple[int, ...]


@dataclass(frozen=True)
class ClassifyPayload:
    categories: tuple[str, ...]
    # (entry text, correct category) in authored order.
    entries: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class OrderPayload:
    # Steps in the correct sequence; learners see them shuffled.
    steps: tuple[str, ...]


@dataclass(frozen=True)
class TaskPayload:
    pass


Payload = Union[McqPayload, ClassifyPayload, OrderPayload, TaskPayload]

DEFAULT_TIME_LIMIT_SECONDS = 60
DEFAULT_PENALTY_INTERVAL_SECONDS = 10
DEFAULT_PENALTY_POINTS = 1


@dataclass(frozen=True)
class AssessmentItem:
    """One auto-scorable exercise pinned to a performance level."""

    id: str
    level: PerformanceLevel
    kind: AssessmentKind
    stem: str
    payload: Payload
    time_limit_seconds: int = DEFAULT_TIME_LIMIT_SECONDS
    penalty_interval_seconds: int = DEFAULT_PENALTY_INTERVAL_SECONDS
    penalty_points: int = DEFAULT_PENALTY_POINTS


@dataclass(frozen=True)
class ContentItem:
    """A classified unit of content with its objectives and assessments."""

    id: str
    content_type: ContentType
    body: str
    objectives: tuple[Objective, ...] = ()
    assessments: tuple[AssessmentItem, ...] = ()

    def cell_of(self, assessment: AssessmentItem) -> MatrixCell:
        return MatrixCell(self.content_type, assessment.level)


@dataclass(frozen=True)
class LearningModule:
    id: str
    title: str
    items: tuple[ContentItem, ...] = ()
    ila_ref: Optional[int] = None

    def assessments(self) -> Iterator[tuple[ContentItem, AssessmentItem]]:
        for item in self.items:
            for assessment in item.assessments:
                yield item, assessment

    def levels_present(self) -> set[PerformanceLevel]:
        """Performance levels that have at least one assessment."""
        return {a.level for _, a in self.assessments()}

    def cells_present(self) -> set[MatrixCell]:
        """Legal cells that have at least one assessment."""
        return {
            MatrixCell(item.content_type, a.level)
            for item, a in self.assessments()
            if is_legal(item.content_type, a.level)
        }


@dataclass(frozen=True)
class Course:
    id: str
    title: str
    modules: tuple[LearningModule, ...] = ()

    def module(self, module_id: str) -> Optional[LearningModule]:
        for mod in self.modules:
            if mod.id == module_id:
                return mod
        return None
