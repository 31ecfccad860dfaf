"""Service core and HTTP layer: sessions, answering, locking, durability."""

import json
import threading

import httpx
import pytest

from cdtc.config import EngineConfig
from cdtc.package_io import compile_course, load_package, load_progress
from cdtc.parser import parse_course
from cdtc.service import ApiError, FixedClock, QuizService, make_http_server

COURSE_TEXT = '''course "c" {
  title: "Service course"
  module m {
    title: "Module"
    item fact f {
      body: "fact demonstration"
      objective remember { given: "g" behavior: "recall" criteria: "well" }
      assess remember mcq q1 { stem: "pick one" option*: "right" option: "wrong" }
    }
    item concept k {
      body: "concept demonstration"
      objective remember { given: "g" behavior: "recall" criteria: "well" }
      objective use { given: "g" behavior: "apply" criteria: "well" }
      assess remember mcq q2 { stem: "pick two" option: "off" option*: "on" }
      assess use classify q3 {
        stem: "sort these"
        categories: "left", "right"
        entry: "alpha" -> "left"
        entry: "beta" -> "right"
        time_limit: 60
        penalty_interval: 10
      }
      assess use order q4 {
        stem: "arrange these"
        step: "first"
        step: "second"
        step: "third"
      }
    }
  }
}
'''

KEY_FIELDS = {"correct"}


def build_course():
    course, diags = parse_course(COURSE_TEXT)
    assert course is not None, [d.message for d in diags]
    return load_package(compile_course(course))


def make_service(tmp_path, at=1_700_000_000, config=None):
    return QuizService(
        build_course(), tmp_path, config or EngineConfig(), FixedClock(at)
    )


def correct_response(course, decision):
    """Build the correct wire response using the authored key."""
    for module in course.modules:
        for item in module.items:
            for assessment in item.assessments:
                if assessment.id != decision["assessment_id"]:
                    continue
                if decision["kind"] == "mcq":
                    right = assessment.payload.options[assessment.payload.correct[0]]
                    return {"choice": decision["options"].index(right)}
                if decision["kind"] == "classify":
                    key = dict(assessment.payload.entries)
                    return {
                        "assignments": {e: key[e] for e in decision["entries"]}
                    }
                if decision["kind"] == "order":
                    authored = list(assessment.payload.steps)
                    presented = decision["steps"]
                    return {
                        "arrangement": [presented.index(s) for s in authored]
                    }
                return {"confirmed": True}
    raise AssertionError("assessment not found")


def wrong_response(decision):
    if decision["kind"] == "mcq":
        return {"choice": 0}  # may be right by chance; callers that need a
        # guaranteed wrong answer use guaranteed_wrong_response
    if decision["kind"] == "classify":
        category = decision["categories"][0]
        return {"assignments": {e: category for e in decision["entries"]}}
    if decision["kind"] == "order":
        n = len(decision["steps"])
        return {"arrangement": list(range(1, n)) + [0]}
    return {"confirmed": False}


def guaranteed_wrong_response(course, decision):
    if decision["kind"] != "mcq":
        return wrong_response(decision)
    right = correct_response(course, decision)["choice"]
    return {"choice": (right + 1) % len(decision["options"])}


def submit(service, session_id, decision, response, elapsed=5):
    return service.handle_answer(
        session_id,
        {
            "item_id": decision["item_id"],
            "assessment_id": decision["assessment_id"],
            "response": response,
            "elapsed_seconds": elapsed,
        },
    )


def test_start_session_and_catalogue(tmp_path):
    service = make_service(tmp_path)
    assert service.list_courses() == [{"course_id": "c", "title": "Service course"}]
    modules = service.list_modules("c")
    assert modules[0]["module_id"] == "m" and modules[0]["item_count"] == 2
    descriptor = service.start_session("amita", "c", "m", seed=5)
    assert descriptor["session_id"]
    assert descriptor["decision"]["type"] == "item"

    with pytest.raises(ApiError) as e:
        service.start_session("amita", "nope", "m")
    assert (e.value.status, e.value.code) == (404, "UnknownCourse")
    with pytest.raises(ApiError) as e:
        service.start_session("amita", "c", "nope")
    assert (e.value.status, e.value.code) == (404, "UnknownModule")
    with pytest.raises(ApiError) as e:
        service.list_modules("nope")
    assert e.value.status == 404


def test_correct_answer_scores_and_advances(tmp_path):
    service = make_service(tmp_path)
    course = service.course
    descriptor = service.start_session("amita", "c", "m", seed=5)
    decision = descriptor["decision"]
    feedback = submit(
        service, descriptor["session_id"], decision, correct_response(course, decision)
    )
    assert feedback["score"]["final_points"] == feedback["score"]["max_points"]
    assert feedback["score"]["correct"] is True
    assert feedback["mastery"]["cell_attempts_counted"] == 1
    assert feedback["decision"]["type"] == "item"


def test_answering_unserved_item_is_item_mismatch(tmp_path):
    service = make_service(tmp_path)
    descriptor = service.start_session("amita", "c", "m", seed=5)
    decision = descriptor["decision"]
    with pytest.raises(ApiError) as e:
        service.handle_answer(
            descriptor["session_id"],
            {
                "item_id": decision["item_id"],
                "assessment_id": "not-the-one",
                "response": {"choice": 0},
                "elapsed_seconds": 1,
            },
        )
    assert (e.value.status, e.value.code) == (409, "ItemMismatch")


def test_shape_errors_are_422(tmp_path):
    service = make_service(tmp_path)
    descriptor = service.start_session("amita", "c", "m", seed=5)
    decision = descriptor["decision"]
    sid = descriptor["session_id"]
    bad_submissions = [
        {"response": {"choice": "zero"}, "elapsed_seconds": 1},
        {"response": {"choice": 99}, "elapsed_seconds": 1},
        {"response": {}, "elapsed_seconds": 1},
        {"response": {"choice": 0}, "elapsed_seconds": -1},
        {"response": {"choice": 0}, "elapsed_seconds": 3601},
        {"response": {"choice": 0}, "elapsed_seconds": "1"},
    ]
    for extra in bad_submissions:
        with pytest.raises(ApiError) as e:
            service.handle_answer(
                sid,
                {
                    "item_id": decision["item_id"],
                    "assessment_id": decision["assessment_id"],
                    **extra,
                },
            )
        assert e.value.status == 422
    # session still serves the same pending item afterwards
    assert service.get_next(sid)["decision"] == decision


def test_unknown_session_is_404(tmp_path):
    service = make_service(tmp_path)
    with pytest.raises(ApiError) as e:
        service.get_next("ghost")
    assert e.value.status == 404
    with pytest.raises(ApiError) as e:
        service.handle_answer("ghost", {})
    assert e.value.status == 404


def walk_session(service, learner="amita", seed=7, answers=30, policy="correct"):
    course = service.course
    descriptor = service.start_session(learner, "c", "m", seed=seed)
    sid = descriptor["session_id"]
    decision = descriptor["decision"]
    payloads = [descriptor]
    while decision["type"] == "item" and answers > 0:
        answers -= 1
        if policy == "correct":
            response = correct_response(course, decision)
        else:
            response = guaranteed_wrong_response(course, decision)
        feedback = submit(service, sid, decision, response)
        payloads.append(feedback)
        decision = feedback["decision"]
    return sid, decision, payloads


def test_scripted_walk_unlocks_use_after_three_correct(tmp_path):
    service = make_service(tmp_path)
    course = service.course
    descriptor = service.start_session("amita", "c", "m", seed=7)
    sid = descriptor["session_id"]
    decision = descriptor["decision"]
    served_levels = []
    for _ in range(3):
        assert decision["level"] == "remember"
        served_levels.append(decision["level"])
        decision = submit(
            service, sid, decision, correct_response(course, decision)
        )["decision"]
    assert decision["type"] == "item"
    assert decision["level"] == "use"


def test_full_walk_completes_and_persists(tmp_path):
    service = make_service(tmp_path)
    sid, decision, payloads = walk_session(service)
    assert decision["type"] == "complete"
    assert decision["next_due_at"] == 1_700_000_000 + 86_400
    progress = load_progress("amita", tmp_path)
    assert progress.total_attempts() == len(payloads) - 1

    # restart: sessions are gone, progress survives
    reborn = make_service(tmp_path)
    with pytest.raises(ApiError):
        reborn.get_next(sid)
    assert load_progress("amita", tmp_path) == progress
    snapshot = reborn.learner_progress("amita")
    assert snapshot["modules"]["m"]["gates"] == {
        "remember": "mastered", "use": "mastered",
    }
    assert all(c["mastered"] for c in snapshot["modules"]["m"]["cells"].values())


def test_progress_endpoint_shape(tmp_path):
    service = make_service(tmp_path)
    walk_session(service, answers=3)
    snapshot = service.learner_progress("amita")
    module = snapshot["modules"]["m"]
    assert set(module["cells"]) <= {"fact/remember", "concept/remember", "concept/use"}
    for cell_info in module["cells"].values():
        assert {"ratio", "attempts_counted", "mastered"} <= set(cell_info)
    assert module["gates"]["remember"] in {"unlocked", "mastered"}
    assert snapshot["due_reviews"] == []


def collect_strings(value):
    if isinstance(value, dict):
        for key, inner in value.items():
            yield key
            yield from collect_strings(inner)
    elif isinstance(value, list):
        for inner in value:
            yield from collect_strings(inner)
    elif isinstance(value, str):
        yield value


def test_served_payloads_never_contain_answer_keys(tmp_path):
    service = make_service(tmp_path)
    course = service.course
    _, _, payloads = walk_session(service, answers=40)
    classify_key = {"alpha": "left", "beta": "right"}
    for payload in payloads:
        decision = payload["decision"]
        keys = set(collect_strings(decision))
        assert "correct" not in keys
        if decision.get("type") == "item":
            if decision["kind"] == "mcq":
                assert "correct" not in decision
                # options are presented strings only
                assert set(decision["options"]) == {
                    "right", "wrong",
                } or set(decision["options"]) == {"off", "on"}
            if decision["kind"] == "classify":
                # entries arrive as bare strings, never paired with categories
                assert all(isinstance(e, str) for e in decision["entries"])
                for entry, category in classify_key.items():
                    assert f"{entry}->{category}" not in keys
            if decision["kind"] == "order":
                assert sorted(decision["steps"]) == sorted(
                    ["first", "second", "third"]
                )
                assert "steps_correct" not in decision


def test_time_penalty_flows_through_feedback(tmp_path):
    service = make_service(tmp_path)
    course = service.course
    descriptor = service.start_session("amita", "c", "m", seed=7)
    sid = descriptor["session_id"]
    decision = descriptor["decision"]
    # answer until the classify shows up
    while decision["kind"] != "classify":
        decision = submit(
            service, sid, decision, correct_response(course, decision)
        )["decision"]
        assert decision["type"] == "item"
    feedback = submit(
        service, sid, decision, correct_response(course, decision), elapsed=85
    )
    assert feedback["score"]["raw_points"] == 2
    assert feedback["score"]["time_penalty"] == 2
    assert feedback["score"]["final_points"] == 0
    assert feedback["score"]["correct"] is False


def test_concurrent_submissions_are_serialized_without_loss(tmp_path):
    service = make_service(tmp_path)
    course = service.course
    descriptor = service.start_session("amita", "c", "m", seed=11)
    sid = descriptor["session_id"]
    target = 100
    counter_lock = threading.Lock()
    issued = [0]
    recorded = [0]
    failures = []

    def worker():
        while True:
            with counter_lock:
                if issued[0] >= target:
                    return
                issued[0] += 1
            # one reserved submission; retry on lost races until it lands
            while True:
                try:
                    decision = service.get_next(sid)["decision"]
                    if decision["type"] != "item":
                        failures.append(f"unexpected decision {decision['type']}")
                        return
                    submit(
                        service, sid, decision,
                        guaranteed_wrong_response(course, decision),
                    )
                    with counter_lock:
                        recorded[0] += 1
                    break
                except ApiError as exc:
                    if exc.code != "ItemMismatch":
                        failures.append(f"{exc.code}: {exc.message}")
                        return

    threads = [threading.Thread(target=worker) for _ in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert not failures
    assert recorded[0] == target
    progress = load_progress("amita", tmp_path)
    assert progress.total_attempts() == target
    # a restarted service sees the same history
    assert load_progress("amita", tmp_path) == progress


def test_core_determinism_two_runs_identical(tmp_path):
    transcripts = []
    progress_bytes = []
    for run in ("one", "two"):
        data_dir = tmp_path / run
        data_dir.mkdir()
        service = make_service(data_dir)
        _, decision, payloads = walk_session(service, seed=99, answers=50)
        transcripts.append(json.dumps(payloads, sort_keys=True))
        progress_bytes.append(
            (data_dir / "amita.progress.json").read_bytes()
        )
    assert transcripts[0] == transcripts[1]
    assert progress_bytes[0] == progress_bytes[1]


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


@pytest.fixture()
def live_server(tmp_path):
    service = make_service(tmp_path)
    server = make_http_server(service, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_port}"
    try:
        yield base, service
    finally:
        server.shutdown()
        server.server_close()


def test_http_routes(live_server):
    base, service = live_server
    with httpx.Client(base_url=base, timeout=10) as client:
        courses = client.get("/api/courses")
        assert courses.status_code == 200
        assert courses.json() == [{"course_id": "c", "title": "Service course"}]
        assert courses.headers["access-control-allow-origin"] == "*"

        modules = client.get("/api/courses/c/modules").json()
        assert modules[0]["module_id"] == "m"

        started = client.post(
            "/api/learners/amita/sessions",
            json={"course_id": "c", "module_id": "m", "seed": 3},
        )
        assert started.status_code == 200
        sid = started.json()["session_id"]
        decision = started.json()["decision"]

        again = client.get(f"/api/sessions/{sid}/next").json()
        assert again["decision"] == decision

        response = correct_response(service.course, decision)
        answered = client.post(
            f"/api/sessions/{sid}/answer",
            json={
                "item_id": decision["item_id"],
                "assessment_id": decision["assessment_id"],
                "response": response,
                "elapsed_seconds": 2,
            },
        )
        assert answered.status_code == 200
        assert answered.json()["score"]["correct"] is True

        mismatch = client.post(
            f"/api/sessions/{sid}/answer",
            json={
                "item_id": decision["item_id"],
                "assessment_id": decision["assessment_id"],
                "response": response,
                "elapsed_seconds": 2,
            },
        )
        # the same item is no longer pending
        assert mismatch.status_code in (409, 200)

        progress = client.get("/api/learners/amita/progress")
        assert progress.status_code == 200
        assert "modules" in progress.json()

        missing = client.get("/api/sessions/ghost/next")
        assert missing.status_code == 404
        assert set(missing.json()) == {"code", "message"}

        unknown = client.get("/api/nothing/here")
        assert unknown.status_code == 404

        preflight = client.options("/api/courses")
        assert preflight.status_code == 204
        assert preflight.headers["access-control-allow-methods"]


def test_http_shape_error_translates_to_422(live_server):
    base, _ = live_server
    with httpx.Client(base_url=base, timeout=10) as client:
        started = client.post(
            "/api/learners/amita/sessions",
            json={"course_id": "c", "module_id": "m", "seed": 3},
        ).json()
        sid = started["session_id"]
        decision = started["decision"]
        bad = client.post(
            f"/api/sessions/{sid}/answer",
            json={
                "item_id": decision["item_id"],
                "assessment_id": decision["assessment_id"],
                "response": {"choice": 99},
                "elapsed_seconds": 2,
            },
        )
        assert bad.status_code == 422
        assert bad.json()["code"] in {"ResponseShapeMismatch", "NegativeElapsed"}
        not_json = client.post(
            f"/api/sessions/{sid}/answer", content=b"{{{",
            headers={"Content-Type": "application/json"},
        )
        assert not_json.status_code == 422
