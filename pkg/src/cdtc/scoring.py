"""Response scoring with the over-time penalty rule.

Raw points are one per correctly recalled / sorted / placed element. Timed
kinds (classify and order) lose `penalty_points` for each completed
`penalty_interval_seconds` beyond `time_limit_seconds`; going over by less
than one full interval costs nothing, and the final score never drops below
zero. Recall questions (mcq) and confirmed tasks are untimed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .course import AssessmentItem, AssessmentKind


class ScoringError(Exception):
    pass


class ResponseShapeMismatch(ScoringError):
    """The response value does not fit the assessment kind."""


class NegativeElapsed(ScoringError):
    """elapsed_seconds was negative."""


class ClockSkew(ScoringError):
    """An attempt was recorded earlier than an already-recorded one."""


@dataclass(frozen=True)
class ScoreResult:
    raw_points: int
    max_points: int
    time_penalty: int
    final_points: int
    correct: bool

    def __post_init__(self):
        if not (0 <= self.raw_points <= self.max_points):
            raise ValueError("raw points out of range")
        if self.max_points < 1 or self.time_penalty < 0:
            raise ValueError("invalid score fields")
        if self.final_points != max(0, self.raw_points - self.time_penalty):
            raise ValueError("final points inconsistent with raw and penalty")
        if self.correct != (self.final_points == self.max_points):
            raise ValueError("correct flag inconsistent with points")


def _result(raw: int, maximum: int, penalty: int) -> ScoreResult:
    final = max(0, raw - penalty)
    return ScoreResult(
        raw_points=raw,
        max_points=maximum,
        time_penalty=penalty,
        final_points=final,
        correct=final == maximum,
    )


def time_penalty(assessment: AssessmentItem, elapsed_seconds: int) -> int:
    """Completed penalty intervals beyond the time limit, in points."""
    over = max(0, elapsed_seconds - assessment.time_limit_seconds)
    return (over // assessment.penalty_interval_seconds) * assessment.penalty_points


def score(assessment: AssessmentItem, response, elapsed_seconds: int) -> ScoreResult:
    """Score one response against an assessment's key.

    Expected response shapes: mcq -> option index; classify -> mapping of
    every entry text to a declared category; order -> permutation of step
    indices (position i holds the index of the step placed there); task ->
    confirmation bool.
    """
    if not isinstance(elapsed_seconds, int) or isinstance(elapsed_seconds, bool):
        raise ResponseShapeMismatch("elapsed_seconds must be an integer")
    if elapsed_seconds < 0:
        raise NegativeElapsed(f"elapsed_seconds is negative: {elapsed_seconds}")

    kind = assessment.kind
    if kind is AssessmentKind.MCQ:
        return _score_mcq(assessment, response)
    if kind is AssessmentKind.CLASSIFY:
        return _score_classify(assessment, response, elapsed_seconds)
    if kind is AssessmentKind.ORDER:
        return _score_order(assessment, response, elapsed_seconds)
    return _score_task(response)


def _score_mcq(assessment: AssessmentItem, response) -> ScoreResult:
    payload = assessment.payload
    if len(payload.correct) != 1:
        raise ValueError(f"mcq '{assessment.id}' has no single correct option")
    if isinstance(response, bool) or not isinstance(response, int):
        raise ResponseShapeMismatch("mcq response must be an option index")
    if not 0 <= response < len(payload.options):
        raise ResponseShapeMismatch(
            f"option index {response} out of range 0..{len(payload.options) - 1}"
        )
    raw = 1 if response == payload.correct[0] else 0
    return _result(raw, 1, 0)


def _score_classify(assessment: AssessmentItem, response, elapsed: int) -> ScoreResult:
    payload = assessment.payload
    if not isinstance(response, Mapping):
        raise ResponseShapeMismatch("classify response must map entries to categories")
    expected = {entry for entry, _ in payload.entries}
    if set(response.keys()) != expected:
        raise ResponseShapeMismatch("classify response must cover every entry exactly")
    declared = set(payload.categories)
    for entry, category in response.items():
        if category not in declared:
            raise ResponseShapeMismatch(f"unknown category {category!r}")
    raw = sum(1 for entry, category in payload.entries if response[entry] == category)
    return _result(raw, len(payload.entries), time_penalty(assessment, elapsed))


def _score_order(assessment: AssessmentItem, response, elapsed: int) -> ScoreResult:
    payload = assessment.payload
    n = len(payload.steps)
    if (
        isinstance(response, (str, bytes))
        or not isinstance(response, Sequence)
        or any(isinstance(v, bool) or not isinstance(v, int) for v in response)
        or sorted(response) != list(range(n))
    ):
        raise ResponseShapeMismatch(
            "order response must be a permutation of the step indices"
        )
    raw = sum(1 for position, step_index in enumerate(response) if position == step_index)
    return _result(raw, n, time_penalty(assessment, elapsed))


def _score_task(response) -> ScoreResult:
    if not isinstance(response, bool):
        raise ResponseShapeMismatch("task response must be a confirmation flag")
    return _result(1 if response else 0, 1, 0)
