"""Mastery gating, adaptive item selection, and spaced refresher scheduling.

Levels unlock strictly in performance order: a level is servable only after
the level below it is mastered (recent-window correct ratio at or above the
threshold, with a minimum attempt count). Within unlocked levels the
weakest cell is always served next, so learners drill small portions where
they are least secure. Mastering a level schedules it for spaced reviews on
an expanding interval ladder; failing a review resets its ladder and
reverts the level to unlocked so it gets re-drilled.

All decisions are deterministic: presentation shuffles come from a
SplitMix64 stream seeded with (session seed + serve ordinal), so identical
seeds, progress, clocks, and answers replay identical transcripts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Union

from .config import EngineConfig
from .course import AssessmentItem, ContentItem, LearningModule
from .model import MatrixCell, PerformanceLevel
from .progress import (
    GateState,
    LearnerProgress,
    ModuleProgress,
    ReviewSlot,
    cell_mastery,
    mastery,
)

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood's splittable PRNG finalizer).

    state' = state + 0x9E3779B97F4A7C15 (mod 2^64); the output mixes the new
    state with two xor-shift-multiply rounds (constants 0xBF58476D1CE4E5B9
    and 0x94D049BB133111EB) and a final 31-bit xor-shift. Chosen for the
    transcript format because it is trivially portable across languages.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform draw in [0, n) by rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n


def shuffled_indices(n: int, rng: SplitMix64) -> tuple[int, ...]:
    """Fisher-Yates shuffle of range(n), high index down, using rng.below."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return tuple(order)


def presentation_order(seed: int, serve_ordinal: int, size: int) -> tuple[int, ...]:
    """Canonical indices in presented order for the Nth serve of a session."""
    if size == 0:
        return ()
    return shuffled_indices(size, SplitMix64((seed + serve_ordinal) & _MASK64))


# ---------------------------------------------------------------------------
# Session and decision values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ServedRecord:
    item_id: str
    assessment_id: str
    cell: MatrixCell
    refresher_level: Optional[PerformanceLevel] = None


@dataclass(frozen=True)
class SessionState:
    session_id: str
    learner_id: str
    course_id: str
    module_id: str
    rng_seed: int
    served: tuple[ServedRecord, ...] = ()

    def with_serve(self, record: ServedRecord) -> "SessionState":
        return replace(self, served=self.served + (record,))


@dataclass(frozen=True)
class ItemServe:
    item: ContentItem
    assessment: AssessmentItem
    cell: MatrixCell
    # Canonical indices of the shuffled collection (mcq options, classify
    # entries, order steps) in the order the learner should see them.
    presentation: tuple[int, ...]
    demonstration: Optional[str] = None
    refresher_level: Optional[PerformanceLevel] = None


@dataclass(frozen=True)
class Gated:
    level: PerformanceLevel
    prerequisite: PerformanceLevel
    threshold: Fraction
    min_attempts: int
    current_ratio: Fraction
    attempts_counted: int


@dataclass(frozen=True)
class Complete:
    next_due_at: Optional[int] = None


Decision = Union[ItemServe, Gated, Complete]


class UnknownModule(KeyError):
    pass


# ---------------------------------------------------------------------------
# Gate rule
# ---------------------------------------------------------------------------


def unlocked_levels(
    progress: LearnerProgress,
    module: LearningModule,
    threshold: Fraction,
    min_attempts: int,
    window: int = 5,
) -> set[PerformanceLevel]:
    """Levels servable under the gate rule, computed from history alone.

    Remember is open whenever the module assesses it; each higher level
    opens once the level below shows mastery over enough recent attempts.
    Levels the module never assesses are never included.
    """
    present = module.levels_present()
    out: set[PerformanceLevel] = set()
    if PerformanceLevel.REMEMBER in present:
        out.add(PerformanceLevel.REMEMBER)
    ratio, counted = mastery(progress, module.id, PerformanceLevel.REMEMBER, window)
    if PerformanceLevel.USE in present and counted >= min_attempts and ratio >= threshold:
        out.add(PerformanceLevel.USE)
    ratio, counted = mastery(progress, module.id, PerformanceLevel.USE, window)
    if PerformanceLevel.FIND in present and counted >= min_attempts and ratio >= threshold:
        out.add(PerformanceLevel.FIND)
    return out


def effective_gates(
    module: LearningModule, module_progress: ModuleProgress
) -> dict[PerformanceLevel, GateState]:
    """Stored gate states, with fresh defaults for levels never settled."""
    gates: dict[PerformanceLevel, GateState] = {}
    for level in sorted(module.levels_present(), key=lambda lv: lv.rank):
        stored = module_progress.gate(level)
        if stored is None:
            stored = (
                GateState.UNLOCKED
                if level is PerformanceLevel.REMEMBER
                else GateState.LOCKED
            )
        gates[level] = stored
    return gates


def _is_cell_mastered(
    progress: LearnerProgress, module_id: str, cell: MatrixCell, config: EngineConfig
) -> bool:
    ratio, counted = cell_mastery(progress, module_id, cell, config.mastery_window)
    return counted >= config.min_attempts and ratio >= config.mastery_threshold


# ---------------------------------------------------------------------------
# Refresher schedule
# ---------------------------------------------------------------------------


def on_mastery_event(
    refreshers: tuple[tuple[PerformanceLevel, ReviewSlot], ...],
    level: PerformanceLevel,
    passed: bool,
    now: int,
    ladder: tuple[int, ...],
) -> tuple[tuple[PerformanceLevel, ReviewSlot], ...]:
    """Advance or reset one level's review slot.

    First mastery starts the ladder at its first rung; a passed review
    climbs one rung (capped at the top); a failed review restarts at the
    first rung. Gate reversion on failure is the caller's job.
    """
    existing = dict(refreshers)
    slot = existing.get(level)
    if not passed:
        new_slot = ReviewSlot(interval_index=0, due_at=now + ladder[0])
    elif slot is None:
        new_slot = ReviewSlot(interval_index=0, due_at=now + ladder[0])
    else:
        index = min(slot.interval_index + 1, len(ladder) - 1)
        new_slot = ReviewSlot(interval_index=index, due_at=now + ladder[index])
    existing[level] = new_slot
    return tuple(sorted(existing.items(), key=lambda pair: pair[0].rank))


def due_reviews(progress: LearnerProgress, now: int) -> list[tuple[str, PerformanceLevel]]:
    """Schedule entries due at `now`, soonest (then module id) first."""
    due: list[tuple[int, str, int, PerformanceLevel]] = []
    for module_id, module_progress in progress.modules:
        for level, slot in module_progress.refreshers:
            if slot.due_at <= now:
                due.append((slot.due_at, module_id, level.rank, level))
    due.sort(key=lambda row: row[:3])
    return [(module_id, level) for _, module_id, _, level in due]


# ---------------------------------------------------------------------------
# Settling progress after an attempt
# ---------------------------------------------------------------------------


def settle_after_attempt(
    progress: LearnerProgress,
    module: LearningModule,
    config: EngineConfig,
    now: int,
    attempt_level: PerformanceLevel,
    review_passed: Optional[bool] = None,
) -> LearnerProgress:
    """Recompute gates and the refresher schedule after a recorded attempt.

    `review_passed` is set when the attempt answered a due refresher review.
    Mastery transitions fire only for the attempted level, so a failed
    review genuinely demands re-drilling before the level re-masters.
    """
    module_progress = progress.module(module.id)
    gates = effective_gates(module, module_progress)
    refreshers = module_progress.refreshers
    ladder = config.refresher_ladder

    if review_passed is not None:
        refreshers = on_mastery_event(refreshers, attempt_level, review_passed, now, ladder)
        if not review_passed:
            if gates.get(attempt_level) is GateState.MASTERED:
                gates[attempt_level] = GateState.UNLOCKED
            for level in gates:
                if level.rank > attempt_level.rank and gates[level] is GateState.UNLOCKED:
                    gates[level] = GateState.LOCKED

    if review_passed is not False and gates.get(attempt_level) is GateState.UNLOCKED:
        ratio, counted = mastery(
            progress, module.id, attempt_level, config.mastery_window
        )
        if counted >= config.min_attempts and ratio >= config.mastery_threshold:
            gates[attempt_level] = GateState.MASTERED
            if dict(refreshers).get(attempt_level) is None:
                refreshers = on_mastery_event(
                    refreshers, attempt_level, True, now, ladder
                )

    # Unlock propagation: a locked level opens when the one below is mastered.
    ordered = sorted(gates, key=lambda lv: lv.rank)
    for previous, level in zip(ordered, ordered[1:]):
        if gates[level] is GateState.LOCKED and gates[previous] is GateState.MASTERED:
            # only adjacent-in-rank levels gate each other
            if level.rank == previous.rank + 1:
                gates[level] = GateState.UNLOCKED

    module_progress = replace(
        module_progress,
        gates=tuple(sorted(gates.items(), key=lambda pair: pair[0].rank)),
        refreshers=refreshers,
    )
    return progress.with_module(module.id, module_progress)


# ---------------------------------------------------------------------------
# Item selection
# ---------------------------------------------------------------------------


def _candidates(
    module: LearningModule,
    progress: LearnerProgress,
    config: EngineConfig,
    levels: set[PerformanceLevel],
) -> list[tuple[tuple, ContentItem, AssessmentItem, MatrixCell]]:
    rows = []
    for item, assessment in module.assessments():
        if assessment.level not in levels:
            continue
        cell = MatrixCell(item.content_type, assessment.level)
        ratio, counted = cell_mastery(progress, module.id, cell, config.mastery_window)
        # counted breaks ratio ties toward under-practiced cells; without it,
        # fully-correct but thinly-attempted cells starve and a module can
        # never complete
        key = (ratio, counted, cell.content_type.rank, item.id, assessment.id)
        rows.append((key, item, assessment, cell))
    rows.sort(key=lambda row: row[0])
    return rows


def _pick(
    rows, session: SessionState
) -> tuple[ContentItem, AssessmentItem, MatrixCell]:
    _, item, assessment, cell = rows[0]
    if len(rows) > 1 and session.served:
        previous = session.served[-1]
        if previous.item_id == item.id and previous.assessment_id == assessment.id:
            _, item, assessment, cell = rows[1]
    return item, assessment, cell


def _serve(
    item: ContentItem,
    assessment: AssessmentItem,
    cell: MatrixCell,
    session: SessionState,
    progress: LearnerProgress,
    module_id: str,
    refresher_level: Optional[PerformanceLevel],
) -> ItemServe:
    payload = assessment.payload
    size = 0
    if hasattr(payload, "options"):
        size = len(payload.options)
    elif hasattr(payload, "entries"):
        size = len(payload.entries)
    elif hasattr(payload, "steps"):
        size = len(payload.steps)
    presentation = presentation_order(session.rng_seed, len(session.served), size)
    seen_cell = any(
        a.cell == cell for a in progress.module(module_id).attempts
    ) or any(s.cell == cell for s in session.served)
    demonstration = None if seen_cell else item.body
    return ItemServe(
        item=item,
        assessment=assessment,
        cell=cell,
        presentation=presentation,
        demonstration=demonstration,
        refresher_level=refresher_level,
    )


def next_item(
    module: LearningModule,
    progress: LearnerProgress,
    session: SessionState,
    config: EngineConfig,
    now: int,
) -> Decision:
    """Choose the next decision for a session.

    Priority: due refresher reviews (earliest first), then the weakest cell
    among unlocked levels; ties break by content type, item id, assessment
    id. The immediately previous serve is avoided when any alternative
    exists in the same tier. Complete once every cell the module assesses
    is mastered and nothing is due for review.
    """
    module_progress = progress.module(module.id)
    gates = effective_gates(module, module_progress)

    due = sorted(
        (
            (slot.due_at, level.rank, level)
            for level, slot in module_progress.refreshers
            if slot.due_at <= now
        ),
    )
    for _, _, level in due:
        # a review may come due for a level that a lower-level failure has
        # re-locked; it stays pending until the level re-opens
        if gates.get(level) is GateState.LOCKED:
            continue
        rows = _candidates(module, progress, config, {level})
        if rows:
            item, assessment, cell = _pick(rows, session)
            return _serve(item, assessment, cell, session, progress, module.id, level)

    cells = module.cells_present()
    all_mastered = bool(cells) and all(
        _is_cell_mastered(progress, module.id, cell, config) for cell in cells
    )
    if not cells or all_mastered:
        upcoming = [slot.due_at for _, slot in module_progress.refreshers]
        return Complete(next_due_at=min(upcoming) if upcoming else None)

    open_levels = {lv for lv, st in gates.items() if st is not GateState.LOCKED}
    rows = _candidates(module, progress, config, open_levels)
    if rows:
        item, assessment, cell = _pick(rows, session)
        return _serve(item, assessment, cell, session, progress, module.id, None)

    locked = sorted(
        (lv for lv, st in gates.items() if st is GateState.LOCKED),
        key=lambda lv: lv.rank,
    )
    if locked:
        level = locked[0]
        prerequisite = list(PerformanceLevel)[level.rank - 1]
        ratio, counted = mastery(
            progress, module.id, prerequisite, config.mastery_window
        )
        return Gated(
            level=level,
            prerequisite=prerequisite,
            threshold=config.mastery_threshold,
            min_attempts=config.min_attempts,
            current_ratio=ratio,
            attempts_counted=counted,
        )
    upcoming = [slot.due_at for _, slot in module_progress.refreshers]
    return Complete(next_due_at=min(upcoming) if upcoming else None)
