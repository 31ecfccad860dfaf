"""Pedagogy lint rules, coverage matrices, and gap reports for parsed courses.

Errors block compilation; warnings do not.

    E001  objective/assessment on an illegal cell (defense in depth; the
          parser already blocks this structurally)
    E002  mcq with zero or several correct options, or fewer than 2 options
    E003  order with fewer than 2 steps or duplicate step texts; classify
          with fewer than 2 categories, zero entries, entries naming
          undeclared categories, or duplicate entry texts
    E005  objective with an empty given, behavior, or criteria slot
    W101  non-fact item with remember-level assessments but no use-level one
    W102  assessment whose level has no matching objective on the same item
    W103  assessment kind outside the cell's blueprint
    W201  module with zero items
"""

from __future__ import annotations

from dataclasses import dataclass

from .course import AssessmentKind, ContentItem, Course, LearningModule
from .diagnostics import Diagnostic, error, warning
from .model import ContentType, MatrixCell, PerformanceLevel, is_legal, legal_cells
from .objectives import assessment_blueprint


@dataclass(frozen=True)
class CoverageMatrix:
    """Assessment count per legal cell for one module; always 10 keys."""

    counts: dict[MatrixCell, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_report_dict(self) -> dict[str, int]:
        """Counts keyed by cell name, in legal_cells() order."""
        return {cell.name: self.counts[cell] for cell in legal_cells()}


@dataclass(frozen=True)
class Gap:
    """An intended cell on an item with no assessment selected for it."""

    module_id: str
    item_id: str
    cell: MatrixCell
    reason: str


def validate(course: Course) -> list[Diagnostic]:
    """Lint a parsed course; the diagnostic list is the result, in
    (module, item, rule code) order."""
    diags: list[Diagnostic] = []
    for module in course.modules:
        if not module.items:
            diags.append(warning("W201", f"module '{module.id}' has no items"))
            continue
        for item in module.items:
            diags.extend(_lint_item(module, item))
    return diags


def _lint_item(module: LearningModule, item: ContentItem) -> list[Diagnostic]:
    where = f"{module.id}/{item.id}"
    found: list[tuple[str, int, Diagnostic]] = []

    def add(seq: int, diag: Diagnostic) -> None:
        found.append((diag.code, seq, diag))

    for seq, objective in enumerate(item.objectives):
        if not is_legal(item.content_type, objective.level):
            add(seq, error(
                "E001",
                f"{where}: {objective.level.value}-level objective is illegal "
                f"on a {item.content_type.value} item",
            ))
        empty = [
            slot
            for slot, value in (
                ("given", objective.given),
                ("behavior", objective.behavior),
                ("criteria", objective.criteria),
            )
            if not value.strip()
        ]
        if empty:
            add(seq, error(
                "E005",
                f"{where}: {objective.level.value}-level objective has empty "
                f"{', '.join(empty)} (all three components are required)",
            ))

    objective_levels = {o.level for o in item.objectives}
    for seq, assessment in enumerate(item.assessments):
        aw = f"{where}/{assessment.id}"
        cell_legal = is_legal(item.content_type, assessment.level)
        if not cell_legal:
            add(seq, error(
                "E001",
                f"{aw}: {assessment.level.value}-level assessment is illegal "
                f"on a {item.content_type.value} item",
            ))
        if assessment.kind is AssessmentKind.MCQ:
            payload = assessment.payload
            if len(payload.options) < 2:
                add(seq, error(
                    "E002",
                    f"{aw}: mcq needs at least 2 options, has {len(payload.options)}",
                ))
            if len(payload.correct) != 1:
                add(seq, error(
                    "E002",
                    f"{aw}: mcq needs exactly one correct option, "
                    f"has {len(payload.correct)}",
                ))
        elif assessment.kind is AssessmentKind.ORDER:
            steps = assessment.payload.steps
            if len(steps) < 2:
                add(seq, error(
                    "E003",
                    f"{aw}: order needs at least 2 steps, has {len(steps)}",
                ))
            # identical step texts are indistinguishable once shuffled, so
            # positional scoring would be ambiguous for the learner
            for text in sorted({s for s in steps if steps.count(s) > 1}):
                add(seq, error("E003", f"{aw}: duplicate order step {text!r}"))
        elif assessment.kind is AssessmentKind.CLASSIFY:
            payload = assessment.payload
            if len(payload.categories) < 2:
                add(seq, error(
                    "E003",
                    f"{aw}: classify needs at least 2 categories, "
                    f"has {len(payload.categories)}",
                ))
            if not payload.entries:
                add(seq, error("E003", f"{aw}: classify has no entries"))
            declared = set(payload.categories)
            for entry, category in payload.entries:
                if category not in declared:
                    add(seq, error(
                        "E003",
                        f"{aw}: entry {entry!r} maps to undeclared "
                        f"category {category!r}",
                    ))
            texts = [entry for entry, _ in payload.entries]
            for text in sorted({t for t in texts if texts.count(t) > 1}):
                add(seq, error(
                    "E003", f"{aw}: duplicate classify entry {text!r}"
                ))
        if assessment.level not in objective_levels:
            add(seq, warning(
                "W102",
                f"{aw}: no {assessment.level.value}-level objective on this item",
            ))
        if cell_legal:
            cell = MatrixCell(item.content_type, assessment.level)
            if assessment.kind not in assessment_blueprint(cell):
                admissible = ", ".join(k.value for k in assessment_blueprint(cell))
                add(seq, warning(
                    "W103",
                    f"{aw}: kind '{assessment.kind.value}' is outside the "
                    f"{cell.name} blueprint ({admissible})",
                ))

    levels = {a.level for a in item.assessments}
    if (
        item.content_type is not ContentType.FACT
        and PerformanceLevel.REMEMBER in levels
        and PerformanceLevel.USE not in levels
    ):
        add(len(item.assessments), warning(
            "W101",
            f"{where}: {item.content_type.value} item has remember-level "
            "assessments but no use-level assessment",
        ))

    found.sort(key=lambda entry: (entry[0], entry[1]))
    return [diag for _, _, diag in found]


def coverage_matrix(module: LearningModule) -> CoverageMatrix:
    """Count assessments per legal cell; the sum equals the module's
    assessment count (illegal pairs cannot survive parsing)."""
    counts = {cell: 0 for cell in legal_cells()}
    for item, assessment in module.assessments():
        if is_legal(item.content_type, assessment.level):
            counts[MatrixCell(item.content_type, assessment.level)] += 1
    return CoverageMatrix(counts=counts)


def gap_report(course: Course) -> list[Gap]:
    """One Gap per (item, legal cell) the module's own ambition implies but
    no assessment fills.

    A module's ambition is bounded by the highest performance level it uses
    anywhere; items are not expected to exceed it.
    """
    gaps: list[Gap] = []
    for module in course.modules:
        levels_used = module.levels_present()
        if not levels_used:
            continue
        max_level = max(levels_used)
        for item in module.items:
            covered = {a.level for a in item.assessments}
            for cell in legal_cells():
                if cell.content_type is not item.content_type:
                    continue
                if cell.performance > max_level:
                    continue
                if cell.performance in covered:
                    continue
                gaps.append(
                    Gap(
                        module_id=module.id,
                        item_id=item.id,
                        cell=cell,
                        reason=(
                            f"no {cell.performance.value}-level assessment; "
                            f"module '{module.id}' uses levels up to "
                            f"{max_level.value}"
                        ),
                    )
                )
    return gaps
