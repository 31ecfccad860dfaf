"""Canonical package compilation and learner progress persistence.

Both artifacts are single JSON documents with a fixed canonical form:
UTF-8, LF, lexicographically sorted object keys, no insignificant
whitespace, one trailing newline. Matrix cells serialize as
``"<type>/<level>"``; timestamps are integer Unix seconds (UTC).

A package embeds a SHA-256 digest of its canonical course serialization,
so load_package detects any tampering with course content. Progress files
are written atomically (temp file + rename) with one file per learner.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Callable, Optional

from .course import (
    AssessmentItem,
    AssessmentKind,
    ClassifyPayload,
    ContentItem,
    Course,
    LearningModule,
    McqPayload,
    Objective,
    OrderPayload,
    TaskPayload,
)
from .diagnostics import Severity
from .model import ContentType, MatrixCell, PerformanceLevel
from .progress import (
    Attempt,
    GateState,
    LearnerProgress,
    ModuleProgress,
    ReviewSlot,
    fresh_progress,
)
from .scoring import ScoreResult
from .validator import validate

PACKAGE_SCHEMA = "cdtc-package/1"
PROGRESS_SCHEMA = "cdtc-progress/1"

_LEARNER_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$")


class PackageError(Exception):
    pass


class ValidationErrorsPresent(PackageError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        super().__init__(f"course has {len(errors)} validation error(s)")


class SchemaUnsupported(PackageError):
    pass


class HashMismatch(PackageError):
    pass


class MalformedPackage(PackageError):
    pass


class StorageFailure(PackageError):
    pass


class CorruptProgress(PackageError):
    pass


def canonical_json_bytes(value) -> bytes:
    text = json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return (text + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Course <-> plain dicts
# ---------------------------------------------------------------------------


def course_to_dict(course: Course) -> dict:
    return {
        "id": course.id,
        "title": course.title,
        "modules": [_module_to_dict(m) for m in course.modules],
    }


def _module_to_dict(module: LearningModule) -> dict:
    return {
        "id": module.id,
        "title": module.title,
        "ila_ref": module.ila_ref,
        "items": [_item_to_dict(i) for i in module.items],
    }


def _item_to_dict(item: ContentItem) -> dict:
    return {
        "id": item.id,
        "content_type": item.content_type.value,
        "body": item.body,
        "objectives": [
            {
                "level": o.level.value,
                "given": o.given,
                "arranged": o.arranged,
                "behavior": o.behavior,
                "criteria": o.criteria,
            }
            for o in item.objectives
        ],
        "assessments": [_assessment_to_dict(a) for a in item.assessments],
    }


def _assessment_to_dict(assessment: AssessmentItem) -> dict:
    data = {
        "id": assessment.id,
        "level": assessment.level.value,
        "kind": assessment.kind.value,
        "stem": assessment.stem,
        "time_limit_seconds": assessment.time_limit_seconds,
        "penalty_interval_seconds": assessment.penalty_interval_seconds,
        "penalty_points": assessment.penalty_points,
    }
    payload = assessment.payload
    if assessment.kind is AssessmentKind.MCQ:
        data["options"] = list(payload.options)
        data["correct"] = list(payload.correct)
    elif assessment.kind is AssessmentKind.CLASSIFY:
        data["categories"] = list(payload.categories)
        data["entries"] = [[entry, category] for entry, category in payload.entries]
    elif assessment.kind is AssessmentKind.ORDER:
        data["steps"] = list(payload.steps)
    return data


def course_from_dict(data: dict) -> Course:
    try:
        return Course(
            id=data["id"],
            title=data["title"],
            modules=tuple(_module_from_dict(m) for m in data["modules"]),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedPackage(f"bad course structure: {exc}") from exc


def _module_from_dict(data: dict) -> LearningModule:
    return LearningModule(
        id=data["id"],
        title=data["title"],
        ila_ref=data.get("ila_ref"),
        items=tuple(_item_from_dict(i) for i in data["items"]),
    )


def _item_from_dict(data: dict) -> ContentItem:
    return ContentItem(
        id=data["id"],
        content_type=ContentType(data["content_type"]),
        body=data["body"],
        objectives=tuple(
            Objective(
                level=PerformanceLevel(o["level"]),
                given=o["given"],
                arranged=o.get("arranged"),
                behavior=o["behavior"],
                criteria=o["criteria"],
            )
            for o in data["objectives"]
        ),
        assessments=tuple(_assessment_from_dict(a) for a in data["assessments"]),
    )


def _assessment_from_dict(data: dict) -> AssessmentItem:
    kind = AssessmentKind(data["kind"])
    if kind is AssessmentKind.MCQ:
        payload = McqPayload(
            options=tuple(data["options"]), correct=tuple(data["correct"])
        )
    elif kind is AssessmentKind.CLASSIFY:
        payload = ClassifyPayload(
            categories=tuple(data["categories"]),
            entries=tuple((entry, category) for entry, category in data["entries"]),
        )
    elif kind is AssessmentKind.ORDER:
        payload = OrderPayload(steps=tuple(data["steps"]))
    else:
        payload = TaskPayload()
    return AssessmentItem(
        id=data["id"],
        level=PerformanceLevel(data["level"]),
        kind=kind,
        stem=data["stem"],
        payload=payload,
        time_limit_seconds=data["time_limit_seconds"],
        penalty_interval_seconds=data["penalty_interval_seconds"],
        penalty_points=data["penalty_points"],
    )


# ---------------------------------------------------------------------------
# Package compile / load
# ---------------------------------------------------------------------------


def content_hash(course: Course) -> str:
    return hashlib.sha256(canonical_json_bytes(course_to_dict(course))).hexdigest()


def compile_course(course: Course, compiled_at: int = 0) -> bytes:
    """Compile a validated course into canonical package bytes.

    compiled_at defaults to epoch zero so compilation stays a pure function
    of the course; pass a real timestamp to stamp a build time.
    """
    diagnostics = validate(course)
    if any(d.severity is Severity.ERROR for d in diagnostics):
        raise ValidationErrorsPresent(diagnostics)
    package = {
        "schema": PACKAGE_SCHEMA,
        "compiled_at": compiled_at,
        "content_hash": content_hash(course),
        "course": course_to_dict(course),
    }
    return canonical_json_bytes(package)


def load_package(data: bytes) -> Course:
    try:
        document = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPackage(f"package is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise MalformedPackage("package must be a JSON object")
    schema = document.get("schema")
    if schema != PACKAGE_SCHEMA:
        raise SchemaUnsupported(f"unsupported package schema {schema!r}")
    if "course" not in document or "content_hash" not in document:
        raise MalformedPackage("package is missing course or content_hash")
    course = course_from_dict(document["course"])
    actual = content_hash(course)
    if actual != document["content_hash"]:
        raise HashMismatch(
            f"content hash mismatch: stored {document['content_hash']}, "
            f"recomputed {actual}"
        )
    return course


# ---------------------------------------------------------------------------
# Progress <-> plain dicts
# ---------------------------------------------------------------------------


def progress_to_dict(progress: LearnerProgress) -> dict:
    return {
        "schema": PROGRESS_SCHEMA,
        "learner_id": progress.learner_id,
        "modules": {
            module_id: {
                "attempts": [_attempt_to_dict(a) for a in mp.attempts],
                "gates": {lv.value: st.value for lv, st in mp.gates},
                "refreshers": {
                    lv.value: {"interval_index": slot.interval_index, "due_at": slot.due_at}
                    for lv, slot in mp.refreshers
                },
                "session_seeds": list(mp.session_seeds),
            }
            for module_id, mp in progress.modules
        },
    }


def _attempt_to_dict(attempt: Attempt) -> dict:
    return {
        "item_id": attempt.item_id,
        "assessment_id": attempt.assessment_id,
        "cell": attempt.cell.name,
        "timestamp": attempt.timestamp,
        "elapsed_seconds": attempt.elapsed_seconds,
        "result": {
            "raw_points": attempt.result.raw_points,
            "max_points": attempt.result.max_points,
            "time_penalty": attempt.result.time_penalty,
            "final_points": attempt.result.final_points,
            "correct": attempt.result.correct,
        },
    }


def progress_from_dict(data: dict) -> LearnerProgress:
    if data.get("schema") != PROGRESS_SCHEMA:
        raise CorruptProgress(f"unsupported progress schema {data.get('schema')!r}")
    modules = []
    for module_id, mp in sorted(data["modules"].items()):
        attempts = tuple(_attempt_from_dict(a) for a in mp["attempts"])
        gates = tuple(
            sorted(
                ((PerformanceLevel(lv), GateState(st)) for lv, st in mp["gates"].items()),
                key=lambda pair: pair[0].rank,
            )
        )
        refreshers = tuple(
            sorted(
                (
                    (
                        PerformanceLevel(lv),
                        ReviewSlot(
                            interval_index=slot["interval_index"], due_at=slot["due_at"]
                        ),
                    )
                    for lv, slot in mp["refreshers"].items()
                ),
                key=lambda pair: pair[0].rank,
            )
        )
        modules.append(
            (
                module_id,
                ModuleProgress(
                    attempts=attempts,
                    gates=gates,
                    refreshers=refreshers,
                    session_seeds=tuple(mp["session_seeds"]),
                ),
            )
        )
    return LearnerProgress(learner_id=data["learner_id"], modules=tuple(modules))


def _attempt_from_dict(data: dict) -> Attempt:
    result = data["result"]
    return Attempt(
        item_id=data["item_id"],
        assessment_id=data["assessment_id"],
        cell=MatrixCell.from_name(data["cell"]),
        timestamp=data["timestamp"],
        elapsed_seconds=data["elapsed_seconds"],
        result=ScoreResult(
            raw_points=result["raw_points"],
            max_points=result["max_points"],
            time_penalty=result["time_penalty"],
            final_points=result["final_points"],
            correct=result["correct"],
        ),
    )


# ---------------------------------------------------------------------------
# Progress persistence
# ---------------------------------------------------------------------------


def _check_learner_id(learner_id: str) -> None:
    if not _LEARNER_ID_RE.match(learner_id):
        raise StorageFailure(f"invalid learner id {learner_id!r}")


def progress_path(learner_id: str, data_dir) -> Path:
    return Path(data_dir) / f"{learner_id}.progress.json"


def persist_progress(
    progress: LearnerProgress,
    data_dir,
    _before_replace: Optional[Callable[[], None]] = None,
) -> Path:
    """Atomically write one learner's progress file.

    `_before_replace` is a fault-injection hook for crash tests, called
    after the temp file is written but before it replaces the real file.
    """
    _check_learner_id(progress.learner_id)
    target = progress_path(progress.learner_id, data_dir)
    payload = canonical_json_bytes(progress_to_dict(progress))
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_name = tempfile.mkstemp(
            dir=target.parent, prefix=f".{progress.learner_id}.", suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            if _before_replace is not None:
                _before_replace()
            os.replace(temp_name, target)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
    except OSError as exc:
        raise StorageFailure(f"cannot persist progress to {target}: {exc}") from exc
    return target


def load_progress(learner_id: str, data_dir) -> LearnerProgress:
    """Load a learner's progress; unknown learners start fresh."""
    _check_learner_id(learner_id)
    path = progress_path(learner_id, data_dir)
    if not path.exists():
        return fresh_progress(learner_id)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StorageFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
        progress = progress_from_dict(data)
    except CorruptProgress as exc:
        raise CorruptProgress(f"{path}: {exc}") from exc
    except (
        UnicodeDecodeError,
        json.JSONDecodeError,
        KeyError,
        TypeError,
        ValueError,
        AttributeError,
    ) as exc:
        raise CorruptProgress(f"{path}: {exc}") from exc
    if progress.learner_id != learner_id:
        raise CorruptProgress(f"{path}: learner id mismatch")
    return progress
