"""Fine-tuning data construction: pair filtering, decomposition prompts and trajectory checks."""

from __future__ import annotations

import copy
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .actions import ActionEnvironment, call_problem
from .agent.prompts import load_template
from .agent.trace import (
    Action, FinalAnswer, FinalSexp, Obs, OrderChecker, StepSexp, TaskSexp, split_events,
)
from .decompose import Subtask, decompose_by_ops
from .errors import DaraError, GrammarError, MissingDescription, SExprError
from .evaluation import DatasetItem
from .kg.evaluate import evaluate
from .sexpr import (
    RelationAtom, Reverse, SExpr, bind, canonicalize, parse_sexpr, print_sexpr,
    schema_items, semantic_equal, substitute_refs, walk,
)


@dataclass(frozen=True)
class TrainingCandidate:
    item: DatasetItem
    subtasks: int
    relations: tuple[str, ...]   # with repetition, in order of appearance
    key: str                      # canonical printed gold form

    @property
    def qid(self) -> str:
        return self.item.qid


@dataclass(frozen=True)
class FilterPolicy:
    require_complex: bool = True
    max_per_relation: int = 10


def _relation_multiset(expr: SExpr) -> tuple[str, ...]:
    return tuple(n.name for n in walk(expr) if isinstance(n, RelationAtom))


def make_candidate(item: DatasetItem, schema) -> TrainingCandidate:
    gold = bind(item.gold_sexpr, schema)
    return TrainingCandidate(
        item=item,
        subtasks=len(decompose_by_ops(gold, schema)),
        relations=_relation_multiset(gold),
        key=print_sexpr(canonicalize(gold)),
    )


def filter_training_pairs(items: Iterable[DatasetItem | TrainingCandidate], schema,
                          policy: FilterPolicy = FilterPolicy()) -> list[TrainingCandidate]:
    """Deduplicate by logical form, keep complex questions, cap each relation's frequency.

    Input order decides which duplicate survives; the result is sorted by qid.
    """
    seen: set[str] = set()
    usage: Counter[str] = Counter()
    kept = []
    for it in items:
        cand = it if isinstance(it, TrainingCandidate) else make_candidate(it, schema)
        if cand.key in seen:
            continue
        seen.add(cand.key)
        if policy.require_complex and cand.subtasks < 2:
            continue
        distinct = set(cand.relations)
        if any(usage[r] >= policy.max_per_relation for r in distinct):
            continue
        usage.update(distinct)
        kept.append(cand)
    return sorted(kept, key=lambda c: c.qid)


# -- decomposition prompts ----------------------------------------------------

_REF_TEXT = re.compile(r"(?<=[\s(])s-exp-(\d+(?:\.\d+)?)(?=[\s)])")
_TASK_TEXT = re.compile(r"(?<=[\s(])task(\d+(?:\.\d+)?)(?=[\s)])")
_TASK_LINE = re.compile(r"^Task (\d+): (.*)$")
_STEP = re.compile(r"Step(\d+):(\(.*?\)|\S+)(?=\s+Step\d+:|\s*$)")


def _step_text(expr: SExpr) -> str:
    return _REF_TEXT.sub(r"task\1", print_sexpr(expr))


def task_lines(subtasks: Sequence[Subtask]) -> list[str]:
    return [f"Task {t.index}: " + " ".join(f"Step{j}:{_step_text(s)}" for j, s in enumerate(t.steps, 1))
            for t in subtasks]


def _directed_relations(subtasks: Sequence[Subtask]) -> list[tuple[str, str]]:
    """(relation, direction) in order of first use; a bare relation is read from its tail side."""
    out: dict[tuple[str, str], None] = {}

    def visit(e: SExpr, reversed_: bool = False):
        if isinstance(e, RelationAtom):
            out.setdefault((e.name, "outgoing" if reversed_ else "incoming"))
        elif isinstance(e, Reverse):
            visit(e.arg, not reversed_)
        else:
            for child in e.children():
                visit(child)

    for t in subtasks:
        for s in t.steps:
            visit(s)
    return list(out)


def description_block(subtasks: Sequence[Subtask], schema) -> str:
    parts = []
    for n, (rel, direction) in enumerate(_directed_relations(subtasks), 1):
        info = schema.relation(rel)
        if not info.description:
            raise MissingDescription(rel)
        side, cls = ("tail", info.range) if direction == "outgoing" else ("head", info.domain)
        cls_desc = schema.cls(cls).description if schema.has_class(cls) else ""
        suffix = f" ({cls_desc})" if cls_desc else ""
        parts.append(f"{n}. the {direction} relation '{rel}', which describes {info.description}. "
                     f"The type of its {side} entity is '{cls}'{suffix}.")
    return " ".join(parts)


def build_decomposition_prompt(item: DatasetItem | TrainingCandidate, graph) -> str:
    """Prompt asking an annotator model to explain each subtask of the gold form."""
    if isinstance(item, TrainingCandidate):
        item = item.item
    schema = graph.schema
    subtasks = decompose_by_ops(item.gold_sexpr, schema)
    ents = ", ".join(f"{label} ({mid})" for mid, label in item.entities)
    question = f"{item.question} [{ents}]" if ents else item.question
    return load_template("decomposition").substitute(
        question=question,
        subtasks="\n".join(task_lines(subtasks)),
        descriptions=description_block(subtasks, schema),
    ) + "\n"


def parse_decomposition_prompt(text: str) -> list[Subtask]:
    """Recover the subtasks from the Task/Step lines of a prompt."""
    tasks = []
    for line in text.splitlines():
        m = _TASK_LINE.match(line.strip())
        if not m:
            continue
        steps = [parse_sexpr(_TASK_TEXT.sub(r"s-exp-\1", body)) for _, body in _STEP.findall(" " + m.group(2))]
        tasks.append(Subtask(int(m.group(1)), steps))
    return tasks


def write_prompt_bundle(items: Iterable[DatasetItem | TrainingCandidate], graph,
                        out_dir: str | Path) -> tuple[list[Path], dict[str, str]]:
    """One ``<qid>.prompt.txt`` per item; items that cannot be rendered are returned with the reason."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written, skipped = [], {}
    for item in sorted(items, key=lambda i: i.qid):
        try:
            text = build_decomposition_prompt(item, graph)
        except (MissingDescription, SExprError) as exc:
            skipped[item.qid] = str(exc)
            continue
        path = out / f"{item.qid}.prompt.txt"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written, skipped


# -- trajectory validation ----------------------------------------------------

CHECKS = {
    "a": "grammar",
    "b": "ordering",
    "c": "grounding",
    "d": "final form",
    "e": "action arguments",
}


@dataclass(frozen=True)
class Finding:
    check: str
    line: int | None
    message: str


@dataclass
class ValidationReport:
    qid: str
    findings: list[Finding] = field(default_factory=list)

    def passed(self, check: str) -> bool:
        return not any(f.check == check for f in self.findings)

    @property
    def failed_checks(self) -> list[str]:
        return sorted({f.check for f in self.findings})

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "checks": {c: {"name": CHECKS[c], "passed": self.passed(c)} for c in CHECKS},
            "findings": [{"check": f.check, "line": f.line, "message": f.message} for f in self.findings],
        }


def _parse_lenient(text: str, profile: str, report: ValidationReport) -> list[tuple[int, object]]:
    """Parse, dropping each line the grammar rejects (one finding per dropped line)."""
    lines = text.split("\n")
    while True:
        try:
            return split_events("\n".join(lines), profile)
        except GrammarError as exc:
            report.findings.append(Finding("a", exc.line, str(exc)))
            if not exc.line or exc.line > len(lines):
                return []
            lines[exc.line - 1] = ""


def _order(pairs, profile: str, report: ValidationReport) -> list[tuple[int, object]]:
    checker = OrderChecker(profile)
    kept = []
    for line, ev in pairs:
        trial = copy.deepcopy(checker)
        try:
            ev = trial.accept(ev, line)
        except GrammarError as exc:
            report.findings.append(Finding("b", line, str(exc)))
            continue
        checker = trial
        kept.append((line, ev))
    return kept


def _final_form(pairs, item: DatasetItem, graph, profile: str, report: ValidationReport) -> SExpr | None:
    bindings: dict[str, SExpr] = {}
    env = ActionEnvironment(graph, question=item.question)
    for line, ev in pairs:
        if isinstance(ev, StepSexp):
            bindings[f"s-exp-{ev.i}.{ev.j}"] = ev.expr
        elif isinstance(ev, TaskSexp):
            bindings[f"s-exp-{ev.i}"] = ev.expr
        elif isinstance(ev, Action) and profile != "dara":
            try:
                env.execute(ev.name, list(ev.args), profile)
            except DaraError:
                pass
        elif isinstance(ev, FinalSexp):
            try:
                return bind(substitute_refs(ev.expr, bindings), graph.schema)
            except SExprError as exc:
                report.findings.append(Finding("d", line, f"final s-expression does not bind: {exc}"))
                return None
        elif isinstance(ev, FinalAnswer):
            try:
                return env.variable(ev.var).sexpr
            except DaraError as exc:
                report.findings.append(Finding("d", line, str(exc)))
                return None
    report.findings.append(Finding("d", None, "trace has no final answer"))
    return None


def validate_trajectory(text: str, item: DatasetItem, graph, profile: str = "dara",
                        qid: str | None = None) -> ValidationReport:
    """Run checks (a) grammar, (b) ordering, (c) grounding, (d) final form, (e) action arguments."""
    report = ValidationReport(qid or item.qid)
    pairs = _order(_parse_lenient(text, profile, report), profile, report)

    observed = ""
    for line, ev in pairs:
        if isinstance(ev, Obs):
            observed += "\n" + ev.text
        elif isinstance(ev, (StepSexp, TaskSexp, FinalSexp)):
            if isinstance(ev, StepSexp):
                for name in sorted(schema_items(ev.expr)):
                    if graph.schema.has_relation(name) and name not in observed:
                        report.findings.append(Finding("c", line, f"relation {name} was never observed"))
        elif isinstance(ev, Action):
            problem = call_problem(ev.name, ev.args, profile)
            if problem:
                report.findings.append(Finding("e", line, problem))

    final = _final_form(pairs, item, graph, profile, report)
    if final is not None:
        gold = bind(item.gold_sexpr, graph.schema)
        if not semantic_equal(final, gold):
            try:
                same = evaluate(final, graph).answers() == evaluate(gold, graph).answers()
            except SExprError:
                same = False
            if not same:
                report.findings.append(Finding("d", None, f"final form {print_sexpr(final)} differs from gold"))
    return report


def write_review_manifest(entries: Iterable[tuple[str, str, ValidationReport]], out_dir: str | Path) -> Path:
    """Lay out trajectories for human review: ``<qid>/trajectory.txt``, ``<qid>/checklist.md``, ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for qid, text, report in sorted(entries, key=lambda e: e[0]):
        d = out / qid
        d.mkdir(exist_ok=True)
        (d / "trajectory.txt").write_text(text, encoding="utf-8")
        lines = [f"# Review: {qid}", ""]
        for c, name in CHECKS.items():
            mark = "x" if report.passed(c) else " "
            lines.append(f"- [{mark}] ({c}) {name}")
            lines += [f"    - line {f.line}: {f.message}" if f.line else f"    - {f.message}"
                      for f in report.findings if f.check == c]
        lines += ["", "- [ ] reviewer confirms the thoughts match the intent of each step", ""]
        (d / "checklist.md").write_text("\n".join(lines), encoding="utf-8")
        items.append({"qid": qid, "trajectory": f"{qid}/trajectory.txt", "checklist": f"{qid}/checklist.md",
                      "failed_checks": report.failed_checks})
    path = out / "manifest.json"
    path.write_text(json.dumps({"items": items}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
