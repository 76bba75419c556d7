"""Split a logical form into ordered subtasks and put it back together."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import TypeMismatch
from .sexpr import (
    And, Comparison, Count, Join, Ref, RelationAtom, Reverse, SExpr,
    Superlative, bind, refs_in, substitute_refs, value_type,
)


@dataclass
class Subtask:
    index: int
    steps: list[SExpr] = field(default_factory=list)
    description: str | None = None

    @property
    def ref(self) -> str:
        return f"s-exp-{self.index}"

    def step_ref(self, j: int) -> str:
        return f"s-exp-{self.index}.{j}"


def head_class(path: SExpr, schema) -> str | None:
    """Class of the first element of the pairs denoted by a binary ``path``."""
    if isinstance(path, RelationAtom):
        return schema.relation(path.name).domain
    if isinstance(path, Reverse):
        return tail_class(path.arg, schema)
    if isinstance(path, Join):
        return head_class(path.path, schema)
    return None


def tail_class(path: SExpr, schema) -> str | None:
    if isinstance(path, RelationAtom):
        return schema.relation(path.name).range
    if isinstance(path, Reverse):
        return head_class(path.arg, schema)
    if isinstance(path, Join):
        return tail_class(path.arg, schema)
    return None


def _is_projection(e: SExpr) -> bool:
    return isinstance(e, Join) and value_type(e.arg) == "unary"


def decompose_by_ops(expr: SExpr, schema) -> list[Subtask]:
    """One subtask per AND, COUNT, comparative, superlative and projection.

    Subtasks are emitted children first, left to right. Atoms and relation
    paths stay inline. A projection whose input is another projection
    landing on a mediator class is appended as a further step of that
    subtask instead of opening a new one.
    """
    expr = bind(expr, schema)
    tasks: list[Subtask] = []

    def new_task(step: SExpr) -> tuple[SExpr, Subtask]:
        t = Subtask(len(tasks) + 1, [step])
        tasks.append(t)
        return Ref(t.ref), t

    def visit(e: SExpr) -> tuple[SExpr, Subtask | None]:
        if isinstance(e, And):
            left, _ = visit(e.left)
            right, _ = visit(e.right)
            return new_task(And(left, right))
        if isinstance(e, Count):
            return new_task(Count(visit(e.arg)[0]))
        if isinstance(e, Comparison):
            return new_task(e)
        if isinstance(e, Superlative):
            return new_task(type(e)(visit(e.arg)[0], e.attribute))
        if _is_projection(e):
            arg, owner = visit(e.arg)
            if owner is not None and _is_projection(e.arg) and schema.is_mediator(head_class(e.arg.path, schema)):
                owner.steps.append(Join(e.path, Ref(owner.step_ref(len(owner.steps)))))
                return Ref(owner.ref), owner
            return new_task(Join(e.path, arg))
        return e, None

    out, _ = visit(expr)
    if not tasks:
        new_task(out)
    return tasks


def subtask_bindings(subtasks: list[Subtask]) -> dict[str, SExpr]:
    """``s-exp-i.j`` maps to step j of task i; ``s-exp-i`` to its last step."""
    bindings: dict[str, SExpr] = {}
    for t in subtasks:
        for j, step in enumerate(t.steps, 1):
            bindings[t.step_ref(j)] = step
        if t.steps:
            bindings[t.ref] = t.steps[-1]
    return bindings


def reassemble(subtasks: list[Subtask]) -> SExpr:
    """Splice all subtasks into one reference-free expression rooted at the last step."""
    if not subtasks or not subtasks[-1].steps:
        raise TypeMismatch("nothing to reassemble")
    return substitute_refs(subtasks[-1].steps[-1], subtask_bindings(subtasks))


def check_subtasks(subtasks: list[Subtask]) -> list[str]:
    """Problems with numbering or forward references; empty when well formed."""
    problems = []
    for pos, t in enumerate(subtasks, 1):
        if t.index != pos:
            problems.append(f"subtask {t.index} at position {pos}")
        for j, step in enumerate(t.steps, 1):
            for rid in refs_in(step):
                ref = Ref(rid)
                if ref.task > t.index or (ref.task == t.index and (ref.step is None or ref.step >= j)):
                    problems.append(f"{t.step_ref(j)} refers forward to {rid}")
    return problems
