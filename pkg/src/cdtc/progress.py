"""Per-learner progress state: attempt history, gates, refresher slots.

Progress values are immutable; updates return new values. One learner's
progress must be updated by one writer at a time (the service layer holds a
per-learner lock around read-modify-write).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from .model import MatrixCell, PerformanceLevel
from .scoring import ClockSkew, ScoreResult


class GateState(enum.Enum):
    LOCKED = "locked"
    UNLOCKED = "unlocked"
    MASTERED = "mastered"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ReviewSlot:
    """Refresher schedule entry for one mastered (module, level)."""

    interval_index: int
    due_at: int


@dataclass(frozen=True)
class Attempt:
    item_id: str
    assessment_id: str
    cell: MatrixCell
    timestamp: int
    elapsed_seconds: int
    result: ScoreResult


@dataclass(frozen=True)
class ModuleProgress:
    attempts: tuple[Attempt, ...] = ()
    gates: tuple[tuple[PerformanceLevel, GateState], ...] = ()
    refreshers: tuple[tuple[PerformanceLevel, ReviewSlot], ...] = ()
    session_seeds: tuple[int, ...] = ()

    def gate(self, level: PerformanceLevel) -> Optional[GateState]:
        for lv, state in self.gates:
            if lv is level:
                return state
        return None

    def refresher(self, level: PerformanceLevel) -> Optional[ReviewSlot]:
        for lv, slot in self.refreshers:
            if lv is level:
                return slot
        return None

    def with_gate(self, level: PerformanceLevel, state: GateState) -> "ModuleProgress":
        gates = tuple((lv, st) for lv, st in self.gates if lv is not level)
        gates += ((level, state),)
        return replace(self, gates=_sorted_by_level(gates))

    def with_refresher(self, level: PerformanceLevel, slot: ReviewSlot) -> "ModuleProgress":
        slots = tuple((lv, s) for lv, s in self.refreshers if lv is not level)
        slots += ((level, slot),)
        return replace(self, refreshers=_sorted_by_level(slots))


def _sorted_by_level(pairs):
    return tuple(sorted(pairs, key=lambda pair: pair[0].rank))


@dataclass(frozen=True)
class LearnerProgress:
    learner_id: str
    modules: tuple[tuple[str, ModuleProgress], ...] = ()

    def module(self, module_id: str) -> ModuleProgress:
        for mid, prog in self.modules:
            if mid == module_id:
                return prog
        return ModuleProgress()

    def with_module(self, module_id: str, prog: ModuleProgress) -> "LearnerProgress":
        rest = tuple((mid, mp) for mid, mp in self.modules if mid != module_id)
        return replace(self, modules=tuple(sorted(rest + ((module_id, prog),))))

    def last_timestamp(self) -> Optional[int]:
        stamps = [mp.attempts[-1].timestamp for _, mp in self.modules if mp.attempts]
        return max(stamps) if stamps else None

    def total_attempts(self) -> int:
        return sum(len(mp.attempts) for _, mp in self.modules)


def fresh_progress(learner_id: str) -> LearnerProgress:
    return LearnerProgress(learner_id=learner_id)


def record_attempt(
    progress: LearnerProgress,
    module_id: str,
    item_id: str,
    assessment_id: str,
    cell: MatrixCell,
    result: ScoreResult,
    elapsed_seconds: int,
    now: int,
) -> LearnerProgress:
    """Append one attempt to the owning module's history.

    Raises ClockSkew when `now` precedes the learner's latest recorded
    attempt; equal timestamps are allowed.
    """
    last = progress.last_timestamp()
    if last is not None and now < last:
        raise ClockSkew(f"attempt at {now} precedes existing attempt at {last}")
    attempt = Attempt(
        item_id=item_id,
        assessment_id=assessment_id,
        cell=cell,
        timestamp=now,
        elapsed_seconds=elapsed_seconds,
        result=result,
    )
    module = progress.module(module_id)
    module = replace(module, attempts=module.attempts + (attempt,))
    return progress.with_module(module_id, module)


def _windowed(attempts, window: int, keep) -> list[Attempt]:
    matching = [a for a in attempts if keep(a)]
    return matching[-window:] if window > 0 else []


def mastery(
    progress: LearnerProgress,
    module_id: str,
    level: PerformanceLevel,
    window: int = 5,
) -> tuple[Fraction, int]:
    """Correct ratio over the most recent attempts at a level in a module.

    At most `window` attempts are counted; (0, 0) when there are none.
    """
    recent = _windowed(
        progress.module(module_id).attempts,
        window,
        lambda a: a.cell.performance is level,
    )
    if not recent:
        return Fraction(0), 0
    correct = sum(1 for a in recent if a.result.correct)
    return Fraction(correct, len(recent)), len(recent)


def cell_mastery(
    progress: LearnerProgress,
    module_id: str,
    cell: MatrixCell,
    window: int = 5,
) -> tuple[Fraction, int]:
    """Same windowed ratio, restricted to one matrix cell."""
    recent = _windowed(
        progress.module(module_id).attempts, window, lambda a: a.cell == cell
    )
    if not recent:
        return Fraction(0), 0
    correct = sum(1 for a in recent if a.result.correct)
    return Fraction(correct, len(recent)), len(recent)
