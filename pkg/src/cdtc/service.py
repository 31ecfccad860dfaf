"""Delivery service: session lifecycle, answer handling, progress endpoints.

The transport-independent core (`QuizService`) owns the loaded package,
per-learner locks, and in-memory sessions; every successful answer is
scored, recorded, settled against the gates and refresher schedule, and
persisted atomically before the response is produced. Sessions do not
survive a restart but recorded attempts always do.

Served item payloads are keyless: option/entry/step collections go out in
presented (shuffled) order only, and the mapping back to authored order
stays on the server. The HTTP layer is a thin JSON adapter over the core.
"""

from __future__ import annotations

import dataclasses
import json
import secrets
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Optional

from .config import EngineConfig
from .course import AssessmentKind, Course
from .model import PerformanceLevel
from .package_io import (
    CorruptProgress,
    StorageFailure,
    canonical_json_bytes,
    load_progress,
    persist_progress,
)
from .progress import LearnerProgress, cell_mastery, mastery, record_attempt
from .scoring import (
    NegativeElapsed,
    ResponseShapeMismatch,
    ScoreResult,
    score,
)
from .sequencer import (
    Decision,
    Gated,
    ItemServe,
    ServedRecord,
    SessionState,
    due_reviews,
    effective_gates,
    next_item,
    settle_after_attempt,
)

ELAPSED_SANITY_CAP_SECONDS = 3600


class Clock:
    """Integer Unix-seconds clock; replaceable for reproducible runs."""

    def now(self) -> int:
        return int(time.time())


class FixedClock(Clock):
    def __init__(self, at: int):
        self.at = at

    def now(self) -> int:
        return self.at


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)

    def body(self) -> dict:
        return {"code": self.code, "message": self.message}


@dataclass
class _LiveSession:
    state: SessionState
    pending: Decision


class QuizService:
    """One loaded course package plus per-learner progress under a data dir."""

    def __init__(
        self,
        course: Course,
        data_dir,
        config: Optional[EngineConfig] = None,
        clock: Optional[Clock] = None,
    ):
        self.course = course
        self.data_dir = data_dir
        self.config = config or EngineConfig()
        self.clock = clock or Clock()
        self._sessions: dict[str, _LiveSession] = {}
        self._session_counter = 0
        self._learner_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- locking ------------------------------------------------------------

    def _lock_for(self, learner_id: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._learner_locks.get(learner_id)
            if lock is None:
                lock = threading.Lock()
                self._learner_locks[learner_id] = lock
            return lock

    # -- catalogue ----------------------------------------------------------

    def list_courses(self) -> list[dict]:
        return [{"course_id": self.course.id, "title": self.course.title}]

    def list_modules(self, course_id: str) -> list[dict]:
        if course_id != self.course.id:
            raise ApiError(404, "UnknownCourse", f"unknown course '{course_id}'")
        return [
            {
                "module_id": module.id,
                "title": module.title,
                "ila_ref": module.ila_ref,
                "item_count": len(module.items),
            }
            for module in self.course.modules
        ]

    # -- sessions -----------------------------------------------------------

    def start_session(
        self,
        learner_id: str,
        course_id: str,
        module_id: str,
        seed: Optional[int] = None,
    ) -> dict:
        if course_id != self.course.id:
            raise ApiError(404, "UnknownCourse", f"unknown course '{course_id}'")
        module = self.course.module(module_id)
        if module is None:
            raise ApiError(404, "UnknownModule", f"unknown module '{module_id}'")
        with self._lock_for(learner_id):
            progress = self._load(learner_id)
            if seed is None:
                seed = secrets.randbits(63)
            module_progress = progress.module(module_id)
            module_progress = dataclasses.replace(
                module_progress,
                session_seeds=module_progress.session_seeds + (seed,),
            )
            progress = progress.with_module(module_id, module_progress)
            persist_progress(progress, self.data_dir)
            with self._registry_lock:
                self._session_counter += 1
                session_id = f"s{self._session_counter}-{learner_id}"
            state = SessionState(
                session_id=session_id,
                learner_id=learner_id,
                course_id=course_id,
                module_id=module_id,
                rng_seed=seed,
            )
            pending = next_item(module, progress, state, self.config, self.clock.now())
            self._sessions[session_id] = _LiveSession(state=state, pending=pending)
            return {
                "session_id": session_id,
                "seed": seed,
                "decision": self._decision_payload(pending),
            }

    def get_next(self, session_id: str) -> dict:
        live = self._sessions.get(session_id)
        if live is None:
            raise ApiError(404, "SessionNotFound", f"unknown session '{session_id}'")
        return {"decision": self._decision_payload(live.pending)}

    def handle_answer(self, session_id: str, submission: Mapping) -> dict:
        live = self._sessions.get(session_id)
        if live is None:
            raise ApiError(404, "SessionNotFound", f"unknown session '{session_id}'")
        learner_id = live.state.learner_id
        with self._lock_for(learner_id):
            live = self._sessions.get(session_id)
            if live is None:
                raise ApiError(404, "SessionNotFound", f"unknown session '{session_id}'")
            pending = live.pending
            if not isinstance(pending, ItemServe):
                raise ApiError(409, "ItemMismatch", "no item is awaiting an answer")
            item_id = submission.get("item_id")
            assessment_id = submission.get("assessment_id")
            if item_id != pending.item.id or assessment_id != pending.assessment.id:
                raise ApiError(
                    409,
                    "ItemMismatch",
                    f"expected answer to {pending.item.id}/{pending.assessment.id}",
                )
            elapsed = submission.get("elapsed_seconds")
            if not isinstance(elapsed, int) or isinstance(elapsed, bool) or elapsed < 0:
                raise ApiError(
                    422, "ResponseShapeMismatch", "elapsed_seconds must be >= 0"
                )
            if elapsed > ELAPSED_SANITY_CAP_SECONDS:
                raise ApiError(
                    422,
                    "ResponseShapeMismatch",
                    f"elapsed_seconds exceeds sanity cap of {ELAPSED_SANITY_CAP_SECONDS}",
                )
            engine_response = self._translate_response(
                pending, submission.get("response")
            )
            try:
                result = score(pending.assessment, engine_response, elapsed)
            except NegativeElapsed as exc:
                raise ApiError(422, "NegativeElapsed", str(exc))
            except ResponseShapeMismatch as exc:
                raise ApiError(422, "ResponseShapeMismatch", str(exc))

            module = self.course.module(live.state.module_id)
            now = self.clock.now()
            progress = self._load(learner_id)
            progress = record_attempt(
                progress,
                module.id,
                pending.item.id,
                pending.assessment.id,
                pending.cell,
                result,
                elapsed,
                now,
            )
            review_passed = None
            if pending.refresher_level is not None:
                review_passed = result.correct
            progress = settle_after_attempt(
                progress, module, self.config, now, pending.assessment.level, review_passed
            )
            persist_progress(progress, self.data_dir)

            state = live.state.with_serve(
                ServedRecord(
                    item_id=pending.item.id,
                    assessment_id=pending.assessment.id,
                    cell=pending.cell,
                    refresher_level=pending.refresher_level,
                )
            )
            decision = next_item(module, progress, state, self.config, self.clock.now())
            self._sessions[session_id] = _LiveSession(state=state, pending=decision)
            return {
                "score": _score_payload(result),
                "mastery": self._mastery_snapshot(progress, module.id, pending),
                "decision": self._decision_payload(decision),
            }

    # -- progress dashboard ---------------------------------------------------

    def learner_progress(self, learner_id: str) -> dict:
        with self._lock_for(learner_id):
            progress = self._load(learner_id)
        now = self.clock.now()
        modules = {}
        for module in self.course.modules:
            module_progress = progress.module(module.id)
            gates = effective_gates(module, module_progress)
            cells = {}
            for cell in sorted(module.cells_present()):
                ratio, counted = cell_mastery(
                    progress, module.id, cell, self.config.mastery_window
                )
                cells[cell.name] = {
                    "ratio": float(ratio),
                    "attempts_counted": counted,
                    "mastered": counted >= self.config.min_attempts
                    and ratio >= self.config.mastery_threshold,
                }
            modules[module.id] = {
                "title": module.title,
                "attempts": len(module_progress.attempts),
                "gates": {lv.value: st.value for lv, st in gates.items()},
                "cells": cells,
                "refreshers": [
                    {
                        "level": lv.value,
                        "interval_index": slot.interval_index,
                        "due_at": slot.due_at,
                        "due": slot.due_at <= now,
                    }
                    for lv, slot in module_progress.refreshers
                ],
            }
        return {
            "learner_id": learner_id,
            "modules": modules,
            "due_reviews": [
                {"module_id": mid, "level": lv.value}
                for mid, lv in due_reviews(progress, now)
            ],
        }

    # -- internals ------------------------------------------------------------

    def _load(self, learner_id: str) -> LearnerProgress:
        try:
            return load_progress(learner_id, self.data_dir)
        except (StorageFailure, CorruptProgress) as exc:
            raise ApiError(422, type(exc).__name__, str(exc))

    def _translate_response(self, pending: ItemServe, response):
        """Map a wire response (presented order) to the scoring shape."""
        assessment = pending.assessment
        kind = assessment.kind
        if not isinstance(response, Mapping):
            raise ApiError(422, "ResponseShapeMismatch", "response must be an object")
        try:
            if kind is AssessmentKind.MCQ:
                choice = response["choice"]
                if (
                    isinstance(choice, bool)
                    or not isinstance(choice, int)
                    or not 0 <= choice < len(pending.presentation)
                ):
                    raise ApiError(
                        422, "ResponseShapeMismatch", "choice must index an option"
                    )
                return pending.presentation[choice]
            if kind is AssessmentKind.CLASSIFY:
                assignments = response["assignments"]
                if not isinstance(assignments, Mapping):
                    raise ApiError(
                        422, "ResponseShapeMismatch", "assignments must be an object"
                    )
                return dict(assignments)
            if kind is AssessmentKind.ORDER:
                arrangement = response["arrangement"]
                if (
                    not isinstance(arrangement, list)
                    or any(isinstance(v, bool) or not isinstance(v, int) for v in arrangement)
                    or sorted(arrangement) != list(range(len(pending.presentation)))
                ):
                    raise ApiError(
                        422,
                        "ResponseShapeMismatch",
                        "arrangement must be a permutation of presented step indices",
                    )
                return [pending.presentation[p] for p in arrangement]
            return response.get("confirmed")
        except KeyError as exc:
            raise ApiError(422, "ResponseShapeMismatch", f"missing field {exc}")

    def _mastery_snapshot(self, progress, module_id: str, pending: ItemServe) -> dict:
        level = pending.assessment.level
        level_ratio, level_counted = mastery(
            progress, module_id, level, self.config.mastery_window
        )
        cell_ratio, cell_counted = cell_mastery(
            progress, module_id, pending.cell, self.config.mastery_window
        )
        return {
            "level": level.value,
            "level_ratio": float(level_ratio),
            "level_attempts_counted": level_counted,
            "cell": pending.cell.name,
            "cell_ratio": float(cell_ratio),
            "cell_attempts_counted": cell_counted,
            "threshold": float(self.config.mastery_threshold),
            "min_attempts": self.config.min_attempts,
        }

    def _decision_payload(self, decision: Decision) -> dict:
        if isinstance(decision, ItemServe):
            assessment = decision.assessment
            payload = {
                "type": "item",
                "item_id": decision.item.id,
                "assessment_id": assessment.id,
                "level": assessment.level.value,
                "kind": assessment.kind.value,
                "cell": decision.cell.name,
                "stem": assessment.stem,
                "refresher": decision.refresher_level is not None,
            }
            if decision.demonstration is not None:
                payload["demonstration"] = decision.demonstration
            inner = assessment.payload
            if assessment.kind is AssessmentKind.MCQ:
                payload["options"] = [
                    inner.options[i] for i in decision.presentation
                ]
            elif assessment.kind is AssessmentKind.CLASSIFY:
                payload["categories"] = list(inner.categories)
                payload["entries"] = [
                    inner.entries[i][0] for i in decision.presentation
                ]
                payload["time_limit_seconds"] = assessment.time_limit_seconds
                payload["penalty_interval_seconds"] = assessment.penalty_interval_seconds
            elif assessment.kind is AssessmentKind.ORDER:
                payload["steps"] = [inner.steps[i] for i in decision.presentation]
                payload["time_limit_seconds"] = assessment.time_limit_seconds
                payload["penalty_interval_seconds"] = assessment.penalty_interval_seconds
            return payload
        if isinstance(decision, Gated):
            return {
                "type": "gated",
                "level": decision.level.value,
                "needed": {
                    "prerequisite": decision.prerequisite.value,
                    "threshold": float(decision.threshold),
                    "min_attempts": decision.min_attempts,
                    "current_ratio": float(decision.current_ratio),
                    "attempts_counted": decision.attempts_counted,
                },
            }
        return {"type": "complete", "next_due_at": decision.next_due_at}


def _score_payload(result: ScoreResult) -> dict:
    return {
        "raw_points": result.raw_points,
        "max_points": result.max_points,
        "time_penalty": result.time_penalty,
        "final_points": result.final_points,
        "correct": result.correct,
    }


# ---------------------------------------------------------------------------
# HTTP adapter
# ---------------------------------------------------------------------------


def make_http_server(service: QuizService, host: str = "127.0.0.1", port: int = 0):
    """Build a ThreadingHTTPServer serving the JSON API for one service."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # keep test output quiet
            pass

        def _send(self, status: int, body: dict | list) -> None:
            data = canonical_json_bytes(body)
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise ApiError(422, "ResponseShapeMismatch", "body must be JSON")
            if not isinstance(body, dict):
                raise ApiError(422, "ResponseShapeMismatch", "body must be an object")
            return body

        def _route(self, method: str) -> None:
            try:
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if method == "GET" and parts == ["api", "courses"]:
                    self._send(200, service.list_courses())
                elif (
                    method == "GET"
                    and len(parts) == 4
                    and parts[:2] == ["api", "courses"]
                    and parts[3] == "modules"
                ):
                    self._send(200, service.list_modules(parts[2]))
                elif (
                    method == "POST"
                    and len(parts) == 4
                    and parts[:2] == ["api", "learners"]
                    and parts[3] == "sessions"
                ):
                    body = self._read_json()
                    seed = body.get("seed")
                    if seed is not None and (
                        isinstance(seed, bool) or not isinstance(seed, int) or seed < 0
                    ):
                        raise ApiError(
                            422, "ResponseShapeMismatch", "seed must be a non-negative integer"
                        )
                    self._send(
                        200,
                        service.start_session(
                            parts[2],
                            body.get("course_id"),
                            body.get("module_id"),
                            seed=seed,
                        ),
                    )
                elif (
                    method == "GET"
                    and len(parts) == 4
                    and parts[:2] == ["api", "sessions"]
                    and parts[3] == "next"
                ):
                    self._send(200, service.get_next(parts[2]))
                elif (
                    method == "POST"
                    and len(parts) == 4
                    and parts[:2] == ["api", "sessions"]
                    and parts[3] == "answer"
                ):
                    body = self._read_json()
                    self._send(200, service.handle_answer(parts[2], body))
                elif (
                    method == "GET"
                    and len(parts) == 4
                    and parts[:2] == ["api", "learners"]
                    and parts[3] == "progress"
                ):
                    self._send(200, service.learner_progress(parts[2]))
                else:
                    raise ApiError(404, "NotFound", f"no route for {method} {self.path}")
            except ApiError as exc:
                self._send(exc.status, exc.body())

        def do_GET(self):
            self._route("GET")

        def do_POST(self):
            self._route("POST")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

    return ThreadingHTTPServer((host, port), Handler)
