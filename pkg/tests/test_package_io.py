"""Package compilation, loading, integrity, and progress persistence."""

import json

import pytest
from hypothesis import given, settings

from cdtc.course import (
    AssessmentItem,
    AssessmentKind,
    ContentItem,
    Course,
    LearningModule,
    McqPayload,
    Objective,
)
from cdtc.diagnostics import has_errors
from cdtc.model import ContentType, MatrixCell, PerformanceLevel
from cdtc.package_io import (
    CorruptProgress,
    HashMismatch,
    MalformedPackage,
    SchemaUnsupported,
    StorageFailure,
    ValidationErrorsPresent,
    canonical_json_bytes,
    compile_course,
    load_package,
    load_progress,
    persist_progress,
    progress_from_dict,
    progress_path,
    progress_to_dict,
)
from cdtc.progress import (
    GateState,
    ReviewSlot,
    fresh_progress,
    record_attempt,
)
from cdtc.scoring import ScoreResult
from cdtc.validator import validate

from .generators import courses


def small_course():
    item = ContentItem(
        "f", ContentType.FACT, "body",
        objectives=(
            Objective(
                level=PerformanceLevel.REMEMBER, given="g", behavior="b", criteria="c"
            ),
        ),
        assessments=(
            AssessmentItem(
                "q", PerformanceLevel.REMEMBER, AssessmentKind.MCQ, "stem",
                McqPayload(options=("a", "b"), correct=(0,)),
            ),
        ),
    )
    return Course("tiny", "Tiny", (LearningModule("m", "M", (item,)),))


def sample_progress():
    progress = fresh_progress("amita")
    result = ScoreResult(
        raw_points=1, max_points=1, time_penalty=0, final_points=1, correct=True
    )
    progress = record_attempt(
        progress, "m", "f", "q",
        MatrixCell(ContentType.FACT, PerformanceLevel.REMEMBER),
        result, elapsed_seconds=4, now=1_700_000_000,
    )
    module = progress.module("m")
    module = module.with_gate(PerformanceLevel.REMEMBER, GateState.MASTERED)
    module = module.with_refresher(
        PerformanceLevel.REMEMBER, ReviewSlot(interval_index=0, due_at=1_700_086_400)
    )
    return progress.with_module("m", module)


def test_compile_is_deterministic():
    course = small_course()
    assert compile_course(course) == compile_course(course)


def test_compile_bytes_are_canonical():
    data = compile_course(small_course())
    text = data.decode("utf-8")
    assert text.endswith("\n") and not text.endswith("\n\n")
    assert "\r" not in text
    document = json.loads(text)
    assert document["schema"] == "cdtc-package/1"
    # canonical reserialization is identical
    assert canonical_json_bytes(document) == data


def test_content_hash_changes_with_any_string():
    import dataclasses

    course = small_course()
    other = dataclasses.replace(course, title="Tiny but different")
    a = json.loads(compile_course(course))
    b = json.loads(compile_course(other))
    assert a["content_hash"] != b["content_hash"]


def test_compile_rejects_validation_errors():
    bad_item = ContentItem(
        "f", ContentType.FACT, "body",
        assessments=(
            AssessmentItem(
                "q", PerformanceLevel.REMEMBER, AssessmentKind.MCQ, "stem",
                McqPayload(options=("a",), correct=()),
            ),
        ),
    )
    bad = Course("c", "T", (LearningModule("m", "M", (bad_item,)),))
    with pytest.raises(ValidationErrorsPresent):
        compile_course(bad)


def test_load_round_trips_compile():
    course = small_course()
    assert load_package(compile_course(course)) == course


def test_flipping_course_content_is_detected():
    data = compile_course(small_course())
    tampered = data.replace(b'"body":"body"', b'"body":"etch"')
    assert tampered != data
    with pytest.raises(HashMismatch):
        load_package(tampered)


def test_unknown_schema_is_rejected():
    data = compile_course(small_course())
    bumped = data.replace(b"cdtc-package/1", b"cdtc-package/2")
    with pytest.raises(SchemaUnsupported):
        load_package(bumped)


def test_malformed_package_bytes():
    with pytest.raises(MalformedPackage):
        load_package(b"not json at all")
    with pytest.raises(MalformedPackage):
        load_package(b'"just a string"\n')
    with pytest.raises(MalformedPackage):
        load_package(canonical_json_bytes({"schema": "cdtc-package/1"}))
    truncated = json.dumps(
        {"schema": "cdtc-package/1", "content_hash": "00", "course": {"id": "x"}}
    ).encode()
    with pytest.raises(MalformedPackage):
        load_package(truncated)


def test_progress_round_trip_through_file(tmp_path):
    progress = sample_progress()
    persist_progress(progress, tmp_path)
    loaded = load_progress("amita", tmp_path)
    assert loaded == progress


def test_unknown_learner_starts_fresh(tmp_path):
    loaded = load_progress("nobody", tmp_path)
    assert loaded.learner_id == "nobody"
    assert loaded.total_attempts() == 0


def test_truncated_progress_file_is_corrupt(tmp_path):
    persist_progress(sample_progress(), tmp_path)
    path = progress_path("amita", tmp_path)
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(CorruptProgress) as excinfo:
        load_progress("amita", tmp_path)
    assert str(path) in str(excinfo.value)


def test_progress_learner_id_mismatch_is_corrupt(tmp_path):
    persist_progress(sample_progress(), tmp_path)
    data = progress_path("amita", tmp_path).read_bytes()
    progress_path("bela", tmp_path).write_bytes(data)
    with pytest.raises(CorruptProgress):
        load_progress("bela", tmp_path)


def test_progress_rejects_unsafe_learner_ids(tmp_path):
    with pytest.raises(StorageFailure):
        load_progress("../escape", tmp_path)
    with pytest.raises(StorageFailure):
        persist_progress(fresh_progress("a/b"), tmp_path)


def test_crash_before_replace_preserves_previous_file(tmp_path):
    first = sample_progress()
    persist_progress(first, tmp_path)
    second = record_attempt(
        first, "m", "f", "q",
        MatrixCell(ContentType.FACT, PerformanceLevel.REMEMBER),
        ScoreResult(0, 1, 0, 0, False), elapsed_seconds=9, now=1_700_000_500,
    )

    class Crash(RuntimeError):
        pass

    def boom():
        raise Crash("power cut")

    with pytest.raises(Crash):
        persist_progress(second, tmp_path, _before_replace=boom)
    # the primary file still holds the first version, uncorrupted
    assert load_progress("amita", tmp_path) == first
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []


def test_progress_canonicalization_fixed_point():
    progress = sample_progress()
    data = canonical_json_bytes(progress_to_dict(progress))
    reloaded = progress_from_dict(json.loads(data))
    assert canonical_json_bytes(progress_to_dict(reloaded)) == data


def test_progress_schema_gate():
    document = progress_to_dict(sample_progress())
    document["schema"] = "cdtc-progress/9"
    with pytest.raises(CorruptProgress):
        progress_from_dict(document)


@given(courses())
@settings(max_examples=100, deadline=None)
def test_package_round_trip_on_random_courses(course):
    if has_errors(validate(course)):
        return
    data = compile_course(course)
    assert load_package(data) == course
    assert compile_course(load_package(data)) == data
