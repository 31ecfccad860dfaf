"""Recursive-descent parser for the course-authoring DSL (`.cdtc` files).

The grammar, with terminals quoted:

    course      = "course" STRING "{" {meta} {module} "}" ;
    module      = "module" IDENT "{" {meta} {item} "}" ;
    meta        = ("title" | "ila_ref") ":" (STRING | INT) ;
    item        = "item" kind IDENT "{" "body" ":" STRING
                  {objective} {assessment} "}" ;
    kind        = "fact" | "concept" | "procedure" | "principle" ;
    objective   = "objective" level "{" "given" ":" STRING
                  ["arranged" ":" STRING] "behavior" ":" STRING
                  "criteria" ":" STRING "}" ;
    assessment  = "assess" level akind IDENT "{" akbody "}" ;
    level       = "remember" | "use" | "find" ;
    akind       = "mcq" | "classify" | "order" | "task" ;
    akbody(mcq)      = "stem" ":" STRING {"option" ["*"] ":" STRING} ;
    akbody(classify) = "stem" ":" STRING "categories" ":" STRING {"," STRING}
                       {"entry" ":" STRING "->" STRING}
                       ["time_limit" ":" INT] ["penalty_interval" ":" INT] ;
    akbody(order)    = "stem" ":" STRING {"step" ":" STRING}
                       ["time_limit" ":" INT] ["penalty_interval" ":" INT] ;
    akbody(task)     = "stem" ":" STRING ;

Comments run from `#` to end of line. Strings are double-quoted, single
line, with `\\"` and `\\\\` as the only escapes. Identifiers match
`[a-z][a-z0-9-]*`. The string in the course header is the course id and
must itself be a valid identifier; titles are free-form metas.

Parsing never raises for bad input: every failure is reported as an
Error-severity diagnostic with a span, and recovery skips to the end of the
enclosing block so several problems can be reported in one run. A Course is
returned only when no Error was produced.

Diagnostic codes:

    E001  objective or assessment level illegal for the item's content type
    E004  duplicate id (module per course, item per module, assessment per item)
    E100  unexpected token or unknown keyword
    E101  unterminated string
    E102  unexpected end of input (unbalanced braces)
    E103  invalid string escape
    E104  invalid value (out-of-range ila_ref, wrong value type, misplaced meta)
    E105  declared id is not a valid identifier
    W201  module with zero items
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

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
from .diagnostics import Diagnostic, SourceSpan, error, has_errors, warning
from .model import ContentType, PerformanceLevel, is_legal

_IDENT_RE = re.compile(r"^[a-z][a-z0-9-]*$")

# Token kinds
_LBRACE = "{"
_RBRACE = "}"
_COLON = ":"
_COMMA = ","
_STAR = "*"
_ARROW = "->"
_IDENT = "ident"
_INT = "int"
_STRING = "string"
_EOF = "eof"

_KIND_BY_WORD = {k.value: k for k in ContentType}
_LEVEL_BY_WORD = {lv.value: lv for lv in PerformanceLevel}
_AKIND_BY_WORD = {ak.value: ak for ak in AssessmentKind}


@dataclass(frozen=True)
class _Token:
    kind: str
    value: object
    line: int
    column: int
    length: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.column, self.length)

    def describe(self) -> str:
        if self.kind == _EOF:
            return "end of input"
        if self.kind == _IDENT:
            return f"'{self.value}'"
        if self.kind == _STRING:
            return "string"
        if self.kind == _INT:
            return f"'{self.value}'"
        return f"'{self.kind}'"


def _tokenize(text: str) -> tuple[list[_Token], list[Diagnostic]]:
    tokens: list[_Token] = []
    diags: list[Diagnostic] = []
    i, n = 0, len(text)
    line, col = 1, 1

    def emit(kind, value, start_line, start_col, length):
        tokens.append(_Token(kind, value, start_line, start_col, length))

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if c in "{}:,*":
            emit(c, c, line, col, 1)
            i += 1
            col += 1
            continue
        if c == "-" and i + 1 < n and text[i + 1] == ">":
            emit(_ARROW, "->", line, col, 2)
            i += 2
            col += 2
            continue
        if c.isdigit():
            start = i
            start_col = col
            while i < n and text[i].isdigit():
                i += 1
                col += 1
            emit(_INT, int(text[start:i]), line, start_col, i - start)
            continue
        if "a" <= c <= "z":
            start = i
            start_col = col
            while i < n and ("a" <= text[i] <= "z" or "0" <= text[i] <= "9" or text[i] in "_-"):
                # stop before "->" so `x->y` lexes as intended even unspaced
                if text[i] == "-" and i + 1 < n and text[i + 1] == ">":
                    break
                i += 1
                col += 1
            emit(_IDENT, text[start:i], line, start_col, i - start)
            continue
        if c == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            buf: list[str] = []
            closed = False
            while i < n:
                c = text[i]
                if c == '"':
                    i += 1
                    col += 1
                    closed = True
                    break
                if c == "\n":
                    break
                if c == "\\":
                    if i + 1 < n and text[i + 1] in '"\\':
                        buf.append(text[i + 1])
                        i += 2
                        col += 2
                        continue
                    diags.append(
                        error(
                            "E103",
                            "invalid escape sequence; only \\\" and \\\\ are allowed",
                            SourceSpan(line, col, 2 if i + 1 < n else 1),
                        )
                    )
                    if i + 1 < n and text[i + 1] != "\n":
                        buf.append(text[i + 1])
                        i += 2
                        col += 2
                    else:
                        i += 1
                        col += 1
                    continue
                buf.append(c)
                i += 1
                col += 1
            if not closed:
                diags.append(
                    error(
                        "E101",
                        "unterminated string",
                        SourceSpan(start_line, start_col, col - start_col),
                    )
                )
            emit(_STRING, "".join(buf), start_line, start_col, col - start_col)
            continue
        diags.append(
            error("E100", f"unexpected character {c!r}", SourceSpan(line, col, 1))
        )
        i += 1
        col += 1

    emit(_EOF, None, line, col, 0)
    return tokens, diags


class _ParseBail(Exception):
    """Internal unwind after a diagnostic has been recorded."""


class _Parser:
    def __init__(self, tokens: list[_Token], diags: list[Diagnostic]):
        self.tokens = tokens
        self.pos = 0
        self.diags = diags

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != _EOF:
            self.pos += 1
        return tok

    def at(self, kind: str, value: object = None) -> bool:
        tok = self.peek()
        if tok.kind != kind:
            return False
        return value is None or tok.value == value

    def at_word(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == _IDENT and tok.value in words

    def error(self, code: str, message: str, tok: Optional[_Token] = None) -> None:
        tok = tok or self.peek()
        self.diags.append(error(code, message, tok.span))

    def bail(self, code: str, message: str, tok: Optional[_Token] = None) -> None:
        if self.at(_EOF) and tok is None:
            code = "E102"
            message = f"unexpected end of input; {message}"
        self.error(code, message, tok)
        raise _ParseBail()

    def expect(self, kind: str, what: str) -> _Token:
        if self.at(kind):
            return self.advance()
        self.bail("E100", f"expected {what}, found {self.peek().describe()}")

    def expect_word(self, word: str) -> _Token:
        if self.at_word(word):
            return self.advance()
        self.bail("E100", f"expected '{word}', found {self.peek().describe()}")

    def expect_id(self, what: str) -> _Token:
        tok = self.expect(_IDENT, what)
        if not _IDENT_RE.match(tok.value):
            self.error(
                "E105",
                f"{what} {tok.value!r} is not a valid identifier ([a-z][a-z0-9-]*)",
                tok,
            )
        return tok

    def skip_block_remainder(self, consumed_open: bool) -> None:
        """Recover by skipping to the end of the construct we were inside.

        If the construct's opening brace was already consumed, skip tokens
        until its matching close brace is consumed. Otherwise skip tokens up
        to (not including) the next close brace at the current level.
        """
        depth = 1 if consumed_open else 0
        while not self.at(_EOF):
            tok = self.peek()
            if tok.kind == _LBRACE:
                depth += 1
            elif tok.kind == _RBRACE:
                if depth == 0:
                    return
                depth -= 1
                if depth == 0:
                    self.advance()
                    return
            self.advance()

    # -- grammar -----------------------------------------------------------

    def parse_course(self) -> Optional[Course]:
        try:
            self.expect_word("course")
            id_tok = self.expect(_STRING, "course id string")
            course_id = id_tok.value
            if not _IDENT_RE.match(course_id):
                self.error(
                    "E105",
                    f"course id {course_id!r} is not a valid identifier "
                    "([a-z][a-z0-9-]*)",
                    id_tok,
                )
            self.expect(_LBRACE, "'{'")
        except _ParseBail:
            return None

        title: Optional[str] = None
        modules: list[LearningModule] = []
        seen_module_ids: set[str] = set()
        while True:
            if self.at(_RBRACE):
                self.advance()
                break
            if self.at(_EOF):
                self.error("E102", "unexpected end of input; expected '}'")
                break
            if self.at_word("title", "ila_ref"):
                title = self.parse_meta(title, allow_ila_ref=False)[0]
            elif self.at_word("module"):
                module = self.parse_module(seen_module_ids)
                if module is not None:
                    modules.append(module)
            else:
                self.error(
                    "E100",
                    f"expected 'title', 'module', or '}}', found {self.peek().describe()}",
                )
                self.advance()

        trailing = self.peek()
        if trailing.kind != _EOF:
            self.error(
                "E100", f"unexpected {trailing.describe()} after course body", trailing
            )

        return Course(
            id=course_id,
            title=title if title is not None else course_id,
            modules=tuple(modules),
        )

    def parse_meta(
        self, title: Optional[str], allow_ila_ref: bool, ila_ref: Optional[int] = None
    ) -> tuple[Optional[str], Optional[int]]:
        key_tok = self.advance()
        key = key_tok.value
        try:
            self.expect(_COLON, "':'")
            if not self.at(_STRING) and not self.at(_INT):
                self.bail("E100", f"expected a value after '{key}:'")
            value_tok = self.advance()
        except _ParseBail:
            return title, ila_ref
        if key == "title":
            if value_tok.kind != _STRING:
                self.error("E104", "title expects a string value", value_tok)
            else:
                title = value_tok.value
        else:
            if not allow_ila_ref:
                self.error("E104", "ila_ref is only valid inside a module", key_tok)
            elif value_tok.kind != _INT:
                self.error("E104", "ila_ref expects an integer value", value_tok)
            elif not 1 <= value_tok.value <= 21:
                self.error(
                    "E104",
                    f"ila_ref must be between 1 and 21, got {value_tok.value}",
                    value_tok,
                )
            else:
                ila_ref = value_tok.value
        return title, ila_ref

    def parse_module(self, seen_ids: set[str]) -> Optional[LearningModule]:
        self.expect_word("module")
        consumed_open = False
        try:
            id_tok = self.expect_id("module id")
            module_id = id_tok.value
            if module_id in seen_ids:
                self.error("E004", f"duplicate module id '{module_id}'", id_tok)
            seen_ids.add(module_id)
            self.expect(_LBRACE, "'{'")
            consumed_open = True
        except _ParseBail:
            self.skip_block_remainder(consumed_open)
            return None

        title: Optional[str] = None
        ila_ref: Optional[int] = None
        items: list[ContentItem] = []
        seen_item_ids: set[str] = set()
        while True:
            if self.at(_RBRACE):
                self.advance()
                if not items:
                    self.diags.append(
                        warning(
                            "W201",
                            f"module '{module_id}' has no items",
                            id_tok.span,
                        )
                    )
                break
            if self.at(_EOF):
                self.error("E102", "unexpected end of input; expected '}'")
                break
            if self.at_word("title", "ila_ref"):
                title, ila_ref = self.parse_meta(title, allow_ila_ref=True, ila_ref=ila_ref)
            elif self.at_word("item"):
                item = self.parse_item(seen_item_ids)
                if item is not None:
                    items.append(item)
            else:
                self.error(
                    "E100",
                    "expected 'title', 'ila_ref', 'item', or '}', "
                    f"found {self.peek().describe()}",
                )
                self.advance()

        return LearningModule(
            id=module_id,
            title=title if title is not None else module_id,
            ila_ref=ila_ref,
            items=tuple(items),
        )

    def parse_item(self, seen_ids: set[str]) -> Optional[ContentItem]:
        self.expect_word("item")
        consumed_open = False
        try:
            kind_tok = self.peek()
            if not (kind_tok.kind == _IDENT and kind_tok.value in _KIND_BY_WORD):
                self.bail(
                    "E100",
                    "expected a content kind ('fact', 'concept', 'procedure', "
                    f"'principle'), found {kind_tok.describe()}",
                )
            self.advance()
            content_type = _KIND_BY_WORD[kind_tok.value]
            id_tok = self.expect_id("item id")
            item_id = id_tok.value
            if item_id in seen_ids:
                self.error("E004", f"duplicate item id '{item_id}'", id_tok)
            seen_ids.add(item_id)
            self.expect(_LBRACE, "'{'")
            consumed_open = True
            self.expect_word("body")
            self.expect(_COLON, "':'")
            body = self.expect(_STRING, "body string").value
        except _ParseBail:
            self.skip_block_remainder(consumed_open)
            return None

        objectives: list[Objective] = []
        assessments: list[AssessmentItem] = []
        seen_assessment_ids: set[str] = set()
        while True:
            if self.at(_RBRACE):
                self.advance()
                break
            if self.at(_EOF):
                self.error("E102", "unexpected end of input; expected '}'")
                break
            if self.at_word("objective"):
                obj = self.parse_objective(content_type)
                if obj is not None:
                    objectives.append(obj)
            elif self.at_word("assess"):
                assessment = self.parse_assessment(content_type, seen_assessment_ids)
                if assessment is not None:
                    assessments.append(assessment)
            else:
                self.error(
                    "E100",
                    "expected 'objective', 'assess', or '}', "
                    f"found {self.peek().describe()}",
                )
                self.advance()

        return ContentItem(
            id=item_id,
            content_type=content_type,
            body=body,
            objectives=tuple(objectives),
            assessments=tuple(assessments),
        )

    def parse_level(self, content_type: ContentType) -> PerformanceLevel:
        tok = self.peek()
        if not (tok.kind == _IDENT and tok.value in _LEVEL_BY_WORD):
            self.bail(
                "E100",
                "expected a performance level ('remember', 'use', 'find'), "
                f"found {tok.describe()}",
            )
        self.advance()
        level = _LEVEL_BY_WORD[tok.value]
        if not is_legal(content_type, level):
            self.error(
                "E001",
                f"a {content_type.value} item admits no {level.value}-level "
                "objective or assessment (facts can only be remembered)",
                tok,
            )
        return level

    def parse_objective(self, content_type: ContentType) -> Optional[Objective]:
        self.expect_word("objective")
        consumed_open = False
        try:
            level = self.parse_level(content_type)
            self.expect(_LBRACE, "'{'")
            consumed_open = True
            self.expect_word("given")
            self.expect(_COLON, "':'")
            given = self.expect(_STRING, "string").value
            arranged = None
            if self.at_word("arranged"):
                self.advance()
                self.expect(_COLON, "':'")
                arranged = self.expect(_STRING, "string").value
            self.expect_word("behavior")
            self.expect(_COLON, "':'")
            behavior = self.expect(_STRING, "string").value
            self.expect_word("criteria")
            self.expect(_COLON, "':'")
            criteria = self.expect(_STRING, "string").value
            self.expect(_RBRACE, "'}'")
        except _ParseBail:
            self.skip_block_remainder(consumed_open)
            return None
        return Objective(
            level=level,
            given=given,
            behavior=behavior,
            criteria=criteria,
            arranged=arranged,
        )

    def parse_assessment(
        self, content_type: ContentType, seen_ids: set[str]
    ) -> Optional[AssessmentItem]:
        self.expect_word("assess")
        consumed_open = False
        try:
            level = self.parse_level(content_type)
            kind_tok = self.peek()
            if not (kind_tok.kind == _IDENT and kind_tok.value in _AKIND_BY_WORD):
                self.bail(
                    "E100",
                    "expected an assessment kind ('mcq', 'classify', 'order', "
                    f"'task'), found {kind_tok.describe()}",
                )
            self.advance()
            kind = _AKIND_BY_WORD[kind_tok.value]
            id_tok = self.expect_id("assessment id")
            assessment_id = id_tok.value
            if assessment_id in seen_ids:
                self.error("E004", f"duplicate assessment id '{assessment_id}'", id_tok)
            seen_ids.add(assessment_id)
            self.expect(_LBRACE, "'{'")
            consumed_open = True
            self.expect_word("stem")
            self.expect(_COLON, "':'")
            stem = self.expect(_STRING, "string").value

            if kind is AssessmentKind.MCQ:
                payload = self.parse_mcq_body()
                time_limit, penalty_interval = None, None
            elif kind is AssessmentKind.CLASSIFY:
                payload = self.parse_classify_body()
                time_limit, penalty_interval = self.parse_time_fields()
            elif kind is AssessmentKind.ORDER:
                payload = self.parse_order_body()
                time_limit, penalty_interval = self.parse_time_fields()
            else:
                payload = TaskPayload()
                time_limit, penalty_interval = None, None
            self.expect(_RBRACE, "'}'")
        except _ParseBail:
            self.skip_block_remainder(consumed_open)
            return None

        kwargs = {}
        if time_limit is not None:
            kwargs["time_limit_seconds"] = time_limit
        if penalty_interval is not None:
            kwargs["penalty_interval_seconds"] = penalty_interval
        return AssessmentItem(
            id=assessment_id,
            level=level,
            kind=kind,
            stem=stem,
            payload=payload,
            **kwargs,
        )

    def parse_mcq_body(self) -> McqPayload:
        options: list[str] = []
        correct: list[int] = []
        while self.at_word("option"):
            self.advance()
            starred = False
            if self.at(_STAR):
                self.advance()
                starred = True
            self.expect(_COLON, "':'")
            text = self.expect(_STRING, "option string").value
            if starred:
                correct.append(len(options))
            options.append(text)
        return McqPayload(options=tuple(options), correct=tuple(correct))

    def parse_classify_body(self) -> ClassifyPayload:
        self.expect_word("categories")
        self.expect(_COLON, "':'")
        categories = [self.expect(_STRING, "category string").value]
        while self.at(_COMMA):
            self.advance()
            categories.append(self.expect(_STRING, "category string").value)
        entries: list[tuple[str, str]] = []
        while self.at_word("entry"):
            self.advance()
            self.expect(_COLON, "':'")
            entry = self.expect(_STRING, "entry string").value
            self.expect(_ARROW, "'->'")
            category = self.expect(_STRING, "category string").value
            entries.append((entry, category))
        return ClassifyPayload(categories=tuple(categories), entries=tuple(entries))

    def parse_order_body(self) -> OrderPayload:
        steps: list[str] = []
        while self.at_word("step"):
            self.advance()
            self.expect(_COLON, "':'")
            steps.append(self.expect(_STRING, "step string").value)
        return OrderPayload(steps=tuple(steps))

    def parse_time_fields(self) -> tuple[Optional[int], Optional[int]]:
        time_limit = None
        penalty_interval = None
        if self.at_word("time_limit"):
            self.advance()
            self.expect(_COLON, "':'")
            tok = self.expect(_INT, "integer")
            if tok.value < 1:
                self.error("E104", "time_limit must be a positive integer", tok)
            else:
                time_limit = tok.value
        if self.at_word("penalty_interval"):
            self.advance()
            self.expect(_COLON, "':'")
            tok = self.expect(_INT, "integer")
            if tok.value < 1:
                self.error("E104", "penalty_interval must be a positive integer", tok)
            else:
                penalty_interval = tok.value
        return time_limit, penalty_interval


def parse_course(text: str) -> tuple[Optional[Course], list[Diagnostic]]:
    """Parse DSL text into a Course.

    Returns ``(course, diagnostics)``; the course is None whenever at least
    one Error-severity diagnostic was produced. Warnings may accompany a
    successful parse.
    """
    tokens, diags = _tokenize(text)
    parser = _Parser(tokens, diags)
    course = parser.parse_course()
    if course is None and not has_errors(diags):
        # Defensive: a failed parse must always explain itself.
        diags.append(error("E102", "input could not be parsed"))
    if has_errors(diags):
        return None, diags
    return course, diags
