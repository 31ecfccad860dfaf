"""Objective statement rendering and per-cell assessment blueprints.

An objective statement is pure slot filling over the conditions / behavior /
criteria triple: objectives of one cell family share a single sentence form,
so no generation beyond interpolation is needed. The audience noun defaults
to "learner" and can be overridden for a deployment (e.g. a specific worker
role).
"""

from __future__ import annotations

from .course import AssessmentKind, ContentItem, Objective
from .model import ContentType, MatrixCell, PerformanceLevel

DEFAULT_AUDIENCE_NOUN = "learner"


def render_objective(
    item: ContentItem,
    objective: Objective,
    audience_noun: str = DEFAULT_AUDIENCE_NOUN,
) -> str:
    """Fill the objective sentence for one item/objective pair.

    Shape: ``Given <given>[ arranged in <arranged>], the <audience> will be
    able to <behavior>, <criteria>.``
    """
    arranged = ""
    if objective.arranged is not None:
        arranged = f" arranged in {objective.arranged}"
    return (
        f"Given {objective.given}{arranged}, the {audience_noun} "
        f"will be able to {objective.behavior}, {objective.criteria}."
    )


# Admissible auto-scorable exercise kinds per performance level. Find-level
# work that asks the learner to devise or stage something is not machine
# gradable, hence `task` (confirmed activity) at that end; a remembered fact
# has nothing to order or sort, hence mcq only in the fact row.
_BLUEPRINT_BY_LEVEL = {
    PerformanceLevel.REMEMBER: (AssessmentKind.MCQ, AssessmentKind.ORDER),
    PerformanceLevel.USE: (
        AssessmentKind.MCQ,
        AssessmentKind.CLASSIFY,
        AssessmentKind.ORDER,
    ),
    PerformanceLevel.FIND: (AssessmentKind.CLASSIFY, AssessmentKind.TASK),
}

_FACT_REMEMBER_BLUEPRINT = (AssessmentKind.MCQ,)


def assessment_blueprint(cell: MatrixCell) -> tuple[AssessmentKind, ...]:
    """Assessment kinds admissible in a legal cell; never empty."""
    if cell.content_type is ContentType.FACT:
        return _FACT_REMEMBER_BLUEPRINT
    return _BLUEPRINT_BY_LEVEL[cell.performance]
