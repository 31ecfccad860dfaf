"""Canonical pretty-printer for the course DSL.

Emits 2-space indentation, fields in grammar declaration order, LF line
endings, and exactly one trailing newline. Comments and other trivia from
the original source are not part of the model and therefore disappear;
reparsing the output reproduces the same Course value. Timing fields are
omitted when they equal their defaults.
"""

from __future__ import annotations

from .course import (
    AssessmentItem,
    AssessmentKind,
    ContentItem,
    Course,
    DEFAULT_PENALTY_INTERVAL_SECONDS,
    DEFAULT_TIME_LIMIT_SECONDS,
    LearningModule,
    Objective,
)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_canonical(course: Course) -> str:
    """Render a parseable Course back to canonical DSL text."""
    out: list[str] = []
    out.append(f"course {_quote(course.id)} {{")
    out.append(f"  title: {_quote(course.title)}")
    for module in course.modules:
        _render_module(out, module)
    out.append("}")
    return "\n".join(out) + "\n"


def _render_module(out: list[str], module: LearningModule) -> None:
    out.append(f"  module {module.id} {{")
    out.append(f"    title: {_quote(module.title)}")
    if module.ila_ref is not None:
        out.append(f"    ila_ref: {module.ila_ref}")
    for item in module.items:
        _render_item(out, item)
    out.append("  }")


def _render_item(out: list[str], item: ContentItem) -> None:
    out.append(f"    item {item.content_type.value} {item.id} {{")
    out.append(f"      body: {_quote(item.body)}")
    for objective in item.objectives:
        _render_objective(out, objective)
    for assessment in item.assessments:
        _render_assessment(out, assessment)
    out.append("    }")


def _render_objective(out: list[str], objective: Objective) -> None:
    out.append(f"      objective {objective.level.value} {{")
    out.append(f"        given: {_quote(objective.given)}")
    if objective.arranged is not None:
        out.append(f"        arranged: {_quote(objective.arranged)}")
    out.append(f"        behavior: {_quote(objective.behavior)}")
    out.append(f"        criteria: {_quote(objective.criteria)}")
    out.append("      }")


def _render_assessment(out: list[str], assessment: AssessmentItem) -> None:
    out.append(
        f"      assess {assessment.level.value} {assessment.kind.value} "
        f"{assessment.id} {{"
    )
    out.append(f"        stem: {_quote(assessment.stem)}")
    payload = assessment.payload
    if assessment.kind is AssessmentKind.MCQ:
        for index, option in enumerate(payload.options):
            star = "*" if index in payload.correct else ""
            out.append(f"        option{star}: {_quote(option)}")
    elif assessment.kind is AssessmentKind.CLASSIFY:
        categories = ", ".join(_quote(c) for c in payload.categories)
        out.append(f"        categories: {categories}")
        for entry, category in payload.entries:
            out.append(f"        entry: {_quote(entry)} -> {_quote(category)}")
    elif assessment.kind is AssessmentKind.ORDER:
        for step in payload.steps:
            out.append(f"        step: {_quote(step)}")
    if assessment.kind in (AssessmentKind.CLASSIFY, AssessmentKind.ORDER):
        if assessment.time_limit_seconds != DEFAULT_TIME_LIMIT_SECONDS:
            out.append(f"        time_limit: {assessment.time_limit_seconds}")
        if assessment.penalty_interval_seconds != DEFAULT_PENALTY_INTERVAL_SECONDS:
            out.append(f"        penalty_interval: {assessment.penalty_interval_seconds}")
    out.append("      }")
