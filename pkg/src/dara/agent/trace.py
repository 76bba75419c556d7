"""Reasoning traces: events, a marker-based parser, ordering rules and serialization.

Two surface syntaxes are handled. The decomposition syntax uses hash markers
(``# Task 1:``, ``## Step 1.1:``, ``### Action 1.1.1:`` ...), which may start
anywhere on a line. The baseline syntax uses ``Thought:`` / ``Action:`` /
``Observation:`` / ``Final Answer: #k`` lines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..actions import split_arguments
from ..errors import GrammarError, SExprError
from ..sexpr import SExpr, parse_sexpr, print_sexpr

OUTCOMES = ("completed", "budget_exhausted", "parse_failure", "action_error")


# -- events -------------------------------------------------------------------

@dataclass(frozen=True)
class Text:
    """Free text outside any marker (for example the opening sentence)."""
    text: str


@dataclass(frozen=True)
class TaskHeader:
    i: int
    text: str


@dataclass(frozen=True)
class StepHeader:
    i: int
    j: int


@dataclass(frozen=True)
class Action:
    i: int
    j: int
    k: int
    name: str
    args: tuple[str, ...]

    @property
    def call(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


@dataclass(frozen=True)
class Obs:
    i: int
    j: int
    k: int
    text: str


@dataclass(frozen=True)
class Thought:
    i: int
    j: int
    k: int
    text: str


@dataclass(frozen=True)
class StepSexp:
    i: int
    j: int
    expr: SExpr


@dataclass(frozen=True)
class TaskSexp:
    i: int
    expr: SExpr


@dataclass(frozen=True)
class FinalSexp:
    expr: SExpr


@dataclass(frozen=True)
class FinalAnswer:
    var: int


@dataclass(frozen=True)
class ErrorNote:
    text: str


ACTIONABLE = (Action, FinalSexp, FinalAnswer)


@dataclass
class ReasoningTrace:
    question: str
    entities: list[tuple[str, str]]
    profile: str = "dara"
    events: list = field(default_factory=list)
    outcome: str | None = None
    final_sexpr: SExpr | None = None
    answer_var: int | None = None
    stats: object = field(default=None, compare=False, repr=False)

    @property
    def completed(self) -> bool:
        return self.outcome == "completed"

    def serialize(self) -> str:
        return serialize_events(self.events, self.profile)


# -- parsing ------------------------------------------------------------------

_NUM = r"(\d+)"
_HASH_MARKER = re.compile(
    r"(?P<final_answer>\#\s*Final\s+answer\s*:)"
    r"|(?P<final>\#\s*Final\s+s-exp\s*:)"
    r"|(?P<error>\#\#\#\s*Error\s*:)"
    rf"|(?P<action>\#\#\#\s*Action\s+{_NUM}\.{_NUM}\.{_NUM}\s*:)"
    rf"|(?P<obs>\#\#\#\s*Obs(?:ervation)?\s+{_NUM}\.{_NUM}\.{_NUM}\s*:)"
    rf"|(?P<thought>\#\#\#\s*Thought\s+{_NUM}\.{_NUM}\.{_NUM}\s*:)"
    rf"|(?P<step_sexp>\#\#\#\s*S-exp-{_NUM}\.{_NUM}\s*:)"
    rf"|(?P<task_sexp>\#\#\s*S-exp-{_NUM}\s*:)"
    rf"|(?P<step>\#\#\s*Step\s+{_NUM}\.{_NUM}\s*:)"
    rf"|(?P<task>\#\s*Task\s+{_NUM}\s*:)",
    re.IGNORECASE,
)
# a hash run followed by a word at the start of a line must be a known marker
_STRAY_HASH = re.compile(r"^[ \t]*#{1,3}[ \t]*[A-Za-z]", re.MULTILINE)
_BASELINE_MARKER = re.compile(r"^[ \t]*(?P<kind>Thought|Action|Observation|Final Answer|Error)[ \t]*:",
                              re.IGNORECASE | re.MULTILINE)
_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*\.?\s*$", re.DOTALL)
_VAR = re.compile(r"^\s*#\s*(\d+)\s*\.?\s*$")


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def parse_call(body: str, line: int = 1) -> tuple[str, tuple[str, ...]]:
    """``name(a, (b c), d)`` to ``("name", ("a", "(b c)", "d"))``."""
    m = _CALL.match(body)
    if not m:
        raise GrammarError(f"malformed action {body.strip()!r}", line, "name(arguments)")
    inner = m.group(2)
    if inner.count("(") != inner.count(")"):
        raise GrammarError(f"unbalanced parentheses in {body.strip()!r}", line)
    args = tuple(a for a in split_arguments(inner)) if inner.strip() else ()
    return m.group(1), args


def _sexp(body: str, line: int) -> SExpr:
    try:
        return parse_sexpr(body.strip())
    except SExprError as exc:
        raise GrammarError(f"bad s-expression: {exc}", line, "s-expression") from None


def _clean(body: str) -> str:
    return " ".join(body.split())


def parse_dara_text(text: str) -> list[tuple[int, object]]:
    """Split hash-marker text into ``(line, event)`` pairs without checking order."""
    for m in _STRAY_HASH.finditer(text):
        start = m.start() + len(m.group()) - len(m.group().lstrip())
        if not _HASH_MARKER.match(text, start):
            line = text[start:].split("\n", 1)[0].strip()
            raise GrammarError(f"unknown marker {line!r}", _line_of(text, start), "a trace marker")
    events: list = []
    matches = list(_HASH_MARKER.finditer(text))
    lead = text[: matches[0].start()] if matches else text
    if lead.strip():
        events.append((1, Text(_clean(lead))))
    for n, m in enumerate(matches):
        end = matches[n + 1].start() if n + 1 < len(matches) else len(text)
        body = text[m.end():end]
        line = _line_of(text, m.start())
        kind = m.lastgroup
        nums = [int(g) for g in m.groups()[m.re.groupindex[kind]:] if g is not None and g.isdigit()]
        if kind == "task":
            events.append((line, TaskHeader(nums[0], _clean(body))))
        elif kind == "step":
            if body.strip():
                raise GrammarError("unexpected text after step header", line, "an Action or Thought marker")
            events.append((line, StepHeader(nums[0], nums[1])))
        elif kind == "action":
            name, args = parse_call(body, line)
            events.append((line, Action(nums[0], nums[1], nums[2], name, args)))
        elif kind == "obs":
            events.append((line, Obs(nums[0], nums[1], nums[2], _clean(body))))
        elif kind == "thought":
            events.append((line, Thought(nums[0], nums[1], nums[2], _clean(body))))
        elif kind == "step_sexp":
            events.append((line, StepSexp(nums[0], nums[1], _sexp(body, line))))
        elif kind == "task_sexp":
            events.append((line, TaskSexp(nums[0], _sexp(body, line))))
        elif kind == "final":
            events.append((line, FinalSexp(_sexp(body, line))))
        elif kind == "final_answer":
            v = _VAR.match(body)
            if not v:
                raise GrammarError(f"bad final answer {body.strip()!r}", line, "#id")
            events.append((line, FinalAnswer(int(v.group(1)))))
        elif kind == "error":
            events.append((line, ErrorNote(_clean(body))))
    return events


def parse_baseline_text(text: str) -> list[tuple[int, object]]:
    """Split ``Thought:`` / ``Action:`` / ``Observation:`` text into ``(line, event)`` pairs.

    Indices are left at zero; :class:`OrderChecker` numbers them.
    """
    events: list = []
    matches = list(_BASELINE_MARKER.finditer(text))
    lead = text[: matches[0].start()] if matches else text
    if lead.strip():
        events.append((1, Text(_clean(lead))))
    for n, m in enumerate(matches):
        end = matches[n + 1].start() if n + 1 < len(matches) else len(text)
        body = text[m.end():end]
        line = _line_of(text, m.start())
        kind = m.group("kind").lower()
        if kind == "thought":
            events.append((line, Thought(0, 0, 0, _clean(body))))
        elif kind == "action":
            name, args = parse_call(body, line)
            events.append((line, Action(0, 0, 0, name, args)))
        elif kind == "observation":
            events.append((line, Obs(0, 0, 0, _clean(body))))
        elif kind == "error":
            events.append((line, ErrorNote(_clean(body))))
        else:
            v = _VAR.match(body)
            if not v:
                raise GrammarError(f"bad final answer {body.strip()!r}", line, "#id")
            events.append((line, FinalAnswer(int(v.group(1)))))
    return events


class OrderChecker:
    """Enforces index monotonicity and action/observation alternation.

    Feed events one at a time; :meth:`accept` returns the (possibly
    renumbered) event or raises :class:`GrammarError`.
    """

    def __init__(self, profile: str = "dara"):
        self.baseline = profile == "agentbench"
        self.task = 0
        self.step = 0
        self.actions = 0           # actions so far in the current step (all actions for baseline)
        self.pending: Action | None = None
        self.finished = False
        self.count = 0
        self.line = 0

    def _fail(self, msg: str, expected: str | None = None):
        raise GrammarError(msg, self.line, expected)

    def accept(self, ev, line: int | None = None):
        self.count += 1
        self.line = line if line is not None else self.count
        if self.finished and not isinstance(ev, (Text, ErrorNote)):
            self._fail("event after the final marker", "end of trace")
        if self.pending is not None and not isinstance(ev, (Obs, ErrorNote)):
            self._fail(f"{type(ev).__name__} before the observation of action {self.pending.k}", "an observation")
        if self.baseline:
            return self._accept_baseline(ev)
        if isinstance(ev, TaskHeader):
            if ev.i != self.task + 1:
                self._fail(f"task {ev.i} follows task {self.task}", f"Task {self.task + 1}")
            self.task, self.step, self.actions = ev.i, 0, 0
        elif isinstance(ev, StepHeader):
            if (ev.i, ev.j) != (self.task, self.step + 1):
                self._fail(f"step {ev.i}.{ev.j} out of order", f"Step {self.task}.{self.step + 1}")
            self.step, self.actions = ev.j, 0
        elif isinstance(ev, Action):
            if (ev.i, ev.j, ev.k) != (self.task, self.step, self.actions + 1):
                self._fail(f"action {ev.i}.{ev.j}.{ev.k} out of order",
                           f"Action {self.task}.{self.step}.{self.actions + 1}")
            self.actions = ev.k
            self.pending = ev
        elif isinstance(ev, Obs):
            if self.pending is None or (ev.i, ev.j, ev.k) != (self.pending.i, self.pending.j, self.pending.k):
                self._fail(f"observation {ev.i}.{ev.j}.{ev.k} without a matching action")
            self.pending = None
        elif isinstance(ev, Thought):
            if (ev.i, ev.j) != (self.task, self.step) or ev.k not in (self.actions, self.actions + 1):
                self._fail(f"thought {ev.i}.{ev.j}.{ev.k} out of order")
        elif isinstance(ev, StepSexp):
            if (ev.i, ev.j) != (self.task, self.step):
                self._fail(f"S-exp-{ev.i}.{ev.j} outside its step", f"S-exp-{self.task}.{self.step}")
        elif isinstance(ev, TaskSexp):
            if ev.i != self.task:
                self._fail(f"S-exp-{ev.i} outside its task", f"S-exp-{self.task}")
        elif isinstance(ev, (FinalSexp, FinalAnswer)):
            self.finished = True
        return ev

    def _accept_baseline(self, ev):
        if isinstance(ev, Action):
            self.actions += 1
            ev = Action(0, 0, self.actions, ev.name, ev.args)
            self.pending = ev
        elif isinstance(ev, Obs):
            if self.pending is None:
                self._fail("observation without an action")
            ev = Obs(0, 0, self.pending.k, ev.text)
            self.pending = None
        elif isinstance(ev, Thought):
            ev = Thought(0, 0, self.actions + 1, ev.text)
        elif isinstance(ev, FinalAnswer):
            self.finished = True
        elif not isinstance(ev, (Text, ErrorNote)):
            self._fail(f"{type(ev).__name__} is not part of the baseline syntax")
        return ev


def parse_agent_output(text: str, profile: str = "dara") -> list:
    """Parse and order-check one piece of agent text from a fresh state."""
    checker = OrderChecker(profile)
    return [checker.accept(ev, line) for line, ev in split_events(text, profile)]


def split_events(text: str, profile: str = "dara") -> list[tuple[int, object]]:
    return parse_baseline_text(text) if profile == "agentbench" else parse_dara_text(text)


def parse_trace(text: str, profile: str = "dara") -> list:
    return parse_agent_output(text, profile)


# -- serialization ------------------------------------------------------------

def serialize_event(ev, profile: str = "dara") -> str:
    if profile == "agentbench":
        if isinstance(ev, Thought):
            return f"Thought: {ev.text}"
        if isinstance(ev, Action):
            return f"Action: {ev.call}"
        if isinstance(ev, Obs):
            return f"Observation: {ev.text}"
        if isinstance(ev, FinalAnswer):
            return f"Final Answer: #{ev.var}"
        if isinstance(ev, ErrorNote):
            return f"Error: {ev.text}"
    obs_word = "Observation" if profile == "dara_icl" else "Obs"
    if isinstance(ev, Text):
        return ev.text
    if isinstance(ev, TaskHeader):
        return f"# Task {ev.i}: {ev.text}"
    if isinstance(ev, StepHeader):
        return f"## Step {ev.i}.{ev.j}:"
    if isinstance(ev, Action):
        return f"### Action {ev.i}.{ev.j}.{ev.k}: {ev.call}"
    if isinstance(ev, Obs):
        return f"### {obs_word} {ev.i}.{ev.j}.{ev.k}: {ev.text}"
    if isinstance(ev, Thought):
        return f"### Thought {ev.i}.{ev.j}.{ev.k}: {ev.text}"
    if isinstance(ev, StepSexp):
        return f"### S-exp-{ev.i}.{ev.j}: {print_sexpr(ev.expr)}"
    if isinstance(ev, TaskSexp):
        return f"## S-exp-{ev.i}: {print_sexpr(ev.expr)}"
    if isinstance(ev, FinalSexp):
        return f"# Final s-exp:\n{print_sexpr(ev.expr)}"
    if isinstance(ev, FinalAnswer):
        return f"# Final answer: #{ev.var}"
    if isinstance(ev, ErrorNote):
        return f"### Error: {ev.text}"
    raise TypeError(f"not a trace event: {ev!r}")


def serialize_events(events, profile: str = "dara") -> str:
    return "".join(serialize_event(ev, profile) + "\n" for ev in events)
