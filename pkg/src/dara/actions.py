"""Tool functions an agent can call against a knowledge graph.

Two families share one environment: the schema-grounding functions used by
the decomposition agent (relations, classes, descriptions) and the
variable-based functions of the baseline agents (``get_neighbors``,
``intersection``, ``argmax`` ...). Observation text is produced only by
:func:`render`, so re-rendering a logged payload gives identical bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import retrieval
from .errors import (
    DaraError, EmptyTarget, ResolveError, TypeMismatch, UnknownAction, UnknownRelation,
    UnknownSchemaItem, UnknownVariable,
)
from .kg.evaluate import evaluate
from .kg.graph import Denotation, KnowledgeGraph
from .kg.schema import literal_datatype
from .sexpr import (
    ENTITY_RE, REF_RE, XSD, And, ArgMax, ArgMin, COMPARISONS, EntityAtom, Join, LiteralAtom,
    RelationAtom, Reverse, SExpr, datatype_local_name, parse_sexpr, substitute_refs,
)

DARA_ACTIONS = ("get_relations", "get_classes", "get_relevant_relations", "get_relevant_classes", "get_descriptions")
AGENTBENCH_ACTIONS = ("get_relations", "get_neighbors", "intersection", "get_attributes", "argmax", "argmin", "count")
ICL_ACTIONS = (
    "get_relations", "get_neighbors", "intersection", "get_relevant_relations", "argmax", "argmin",
    "count", "get_classes", "get_relevant_classes", "lt", "le", "gt", "ge", "get_descriptions",
    "get_attributes", "get_relevant_attributes",
)
PROFILE_ACTIONS = {"dara": DARA_ACTIONS, "agentbench": AGENTBENCH_ACTIONS, "dara_icl": ICL_ACTIONS}

# actions whose single argument is free text and may itself contain commas
TEXT_ACTIONS = frozenset({"get_relevant_relations", "get_relevant_classes", "get_relevant_attributes"})

# fixed argument counts; None means one or more
ACTION_ARITY = {
    "get_relations": 1, "get_classes": 1, "get_relevant_relations": 1, "get_relevant_classes": 1,
    "get_relevant_attributes": 1, "get_descriptions": None, "get_neighbors": 2, "intersection": 2,
    "get_attributes": 1, "argmax": 2, "argmin": 2, "count": 1, "lt": 2, "le": 2, "gt": 2, "ge": 2,
}


def call_problem(name: str, args, profile: str = "dara") -> str | None:
    """Why a call is malformed for ``profile``, or None when it is well formed."""
    allowed = PROFILE_ACTIONS.get(profile, ())
    if name not in allowed:
        return f"{name} is not available in the {profile} profile"
    args = list(args)
    if name in TEXT_ACTIONS and args:
        args = [", ".join(args)]
    want = ACTION_ARITY[name]
    if want is None and not args:
        return f"{name} needs at least one argument"
    if want is not None and len(args) != want:
        return f"{name} takes {want} argument(s), got {len(args)}"
    if any(not a.strip() for a in args):
        return f"{name} has an empty argument"
    return None


_DIRECTED = re.compile(r"^\s*(\S+?)\s*(?:\((outgoing|incoming)\))?\s*$")
_VARIABLE = re.compile(r"^#(\d+)$")


@dataclass(frozen=True)
class Observation:
    kind: str
    payload: tuple

    @property
    def text(self) -> str:
        return render(self.kind, self.payload)


def _names(items) -> str:
    return "[" + ", ".join(items) + "]"


def render(kind: str, payload: tuple) -> str:
    if kind == "relations":
        subject, out, inc = payload
        return (f"{subject} has following relations. The outgoing relations are {_names(out)}. "
                f"The incoming relations are {_names(inc)}.")
    if kind == "classes":
        subject, classes = payload
        return f"{subject} has following classes. The classes are {_names(classes)}."
    if kind == "list":
        return _names(payload[0])
    if kind == "relevant":
        what, names = payload
        if not names:
            return f"No relevant {what} were found."
        return f"The relevant {what} are {', '.join(names)}."
    if kind == "descriptions":
        return " ".join(_render_description(i, entry) for i, entry in enumerate(payload, 1))
    if kind == "variable":
        vid, cls = payload
        return f"variable #{vid}, which are instances of {cls}"
    if kind == "number":
        vid, n = payload
        return f"variable #{vid}, which is a number: {n}"
    if kind == "error":
        return f"Error: {payload[0]}"
    raise ValueError(f"unknown observation kind {kind!r}")


def _render_description(i: int, entry: tuple) -> str:
    if entry[0] == "class":
        _, name, desc = entry
        return f"{i}. the class '{name}', which describes {desc}."
    _, direction, name, desc, end, cls, cls_desc = entry
    return (f"{i}. the {direction} relation '{name}', which describes {desc}. "
            f"The type of its {end} entities is '{cls}' ({cls_desc}).")


@dataclass
class Variable:
    id: int
    denotation: Denotation
    sexpr: SExpr
    cls: str


@dataclass
class LogEntry:
    name: str
    args: tuple[str, ...]
    observation: Observation


@dataclass
class ActionEnvironment:
    """Per-session state: numbered variables, step-level bindings and the action log."""

    graph: KnowledgeGraph
    provider: object = "lexical"
    topk: int = retrieval.DEFAULT_K
    question: str = ""
    task_text: str | None = None
    variables: list[Variable] = field(default_factory=list)
    bindings: dict[str, SExpr] = field(default_factory=dict)
    log: list[LogEntry] = field(default_factory=list)

    # -- helpers ------------------------------------------------------------

    @property
    def query(self) -> str:
        return (self.task_text or self.question or "").strip() or "relations"

    def _rank(self, query: str, names, k: int | None):
        names = sorted(set(names))
        if not names:
            return []
        ranked = retrieval.rank(query, names, self.provider)
        return [c.name for c in (ranked if k is None else ranked[:k])]

    def resolve(self, arg: str) -> tuple[SExpr, Denotation]:
        """Turn an action argument into an expression and its denotation.

        Accepted forms, tried in order: ``#k`` variable, ``s-exp-i[.j]``
        reference, parenthesised s-expression, entity id, entity label.
        """
        arg = arg.strip()
        m = _VARIABLE.match(arg)
        if m:
            var = self.variable(int(m.group(1)))
            return var.sexpr, var.denotation
        try:
            if REF_RE.match(arg):
                if arg not in self.bindings:
                    raise ResolveError(f"{arg} has not been defined yet")
                expr = substitute_refs(self.bindings[arg], self.bindings)
            elif arg.startswith("("):
                expr = substitute_refs(parse_sexpr(arg), self.bindings)
            elif ENTITY_RE.match(arg):
                expr = EntityAtom(arg)
            else:
                hits = self.graph.find_by_label(arg)
                if not hits:
                    raise ResolveError(f"cannot resolve {arg!r} to an entity")
                expr = EntityAtom(hits[0])
            return expr, evaluate(expr, self.graph)
        except ResolveError:
            raise
        except DaraError as exc:
            raise ResolveError(f"cannot resolve {arg!r}: {exc}") from exc

    def _entities(self, arg: str) -> tuple[SExpr, frozenset]:
        expr, den = self.resolve(arg)
        if den.kind != "unary":
            raise ResolveError(f"{arg} does not denote a set of entities")
        ents = frozenset(x for x in den.value if isinstance(x, str))
        if not ents:
            raise EmptyTarget(f"{arg} denotes no entities")
        return expr, ents

    def variable(self, vid: int) -> Variable:
        if not 0 <= vid < len(self.variables):
            raise UnknownVariable(f"variable #{vid} does not exist")
        return self.variables[vid]

    def _new_variable(self, expr: SExpr, cls: str) -> Variable:
        var = Variable(len(self.variables), evaluate(expr, self.graph), expr, cls)
        self.variables.append(var)
        return var

    def _relation(self, name: str):
        if not self.graph.schema.has_relation(name):
            raise UnknownRelation(f"unknown relation {name!r}")
        return self.graph.schema.relation(name)

    # -- schema grounding ---------------------------------------------------

    def get_relations(self, target: str, topk: int | None = None) -> Observation:
        _, ents = self._entities(target)
        out, inc = set(), set()
        for e in ents:
            out |= self.graph.outgoing_relations(e)
            inc |= self.graph.incoming_relations(e)
        k = topk or self.topk
        return Observation("relations", (target.strip(), tuple(self._rank(self.query, out, k)),
                                         tuple(self._rank(self.query, inc, k))))

    def get_classes(self, target: str, topk: int | None = None) -> Observation:
        _, ents = self._entities(target)
        classes = set()
        for e in ents:
            classes |= self.graph.classes_of(e)
        return Observation("classes", (target.strip(), tuple(self._rank(self.query, classes, topk or self.topk))))

    def get_relevant_relations(self, task: str, topk: int | None = None) -> Observation:
        names = list(self.graph.schema.relations)
        return Observation("relevant", ("relations", tuple(self._rank(task or self.query, names, topk or self.topk))))

    def get_relevant_classes(self, task: str, topk: int | None = None) -> Observation:
        return Observation("relevant", ("classes", tuple(self._rank(task or self.query, self.graph.schema.classes, topk or self.topk))))

    def get_relevant_attributes(self, task: str, topk: int | None = None) -> Observation:
        return Observation("relevant", ("attributes", tuple(self._rank(task or self.query, self.graph.schema.attributes, topk or self.topk))))

    def get_descriptions(self, items) -> Observation:
        if isinstance(items, str):
            items = split_arguments(items)
        schema = self.graph.schema
        entries = []
        for raw in items:
            m = _DIRECTED.match(raw)
            if not m:
                raise UnknownSchemaItem(raw.strip())
            name, direction = m.group(1), m.group(2)
            if schema.has_relation(name):
                r = schema.relation(name)
                direction = direction or "outgoing"
                cls = r.range if direction == "outgoing" else r.domain
                end = "tail" if direction == "outgoing" else "head"
                entries.append(("relation", direction, name, r.description, end, cls, self._class_description(cls)))
            elif schema.has_class(name) and direction is None:
                entries.append(("class", name, schema.cls(name).description))
            else:
                raise UnknownSchemaItem(name)
        if not entries:
            raise UnknownSchemaItem("")
        return Observation("descriptions", tuple(entries))

    def _class_description(self, cls: str) -> str:
        schema = self.graph.schema
        if schema.has_class(cls):
            return schema.cls(cls).description
        return f"{datatype_local_name(literal_datatype(cls))} value"

    # -- variable-based baseline actions ------------------------------------

    def list_relations(self, target: str) -> Observation:
        _, ents = self._entities(target)
        names = set()
        for e in ents:
            names |= self.graph.outgoing_relations(e) | self.graph.incoming_relations(e)
        return Observation("list", (tuple(self._rank(self.query, names, None)),))

    def list_classes(self, target: str) -> Observation:
        _, ents = self._entities(target)
        classes = set()
        for e in ents:
            classes |= self.graph.classes_of(e)
        return Observation("list", (tuple(self._rank(self.query, classes, None)),))

    def get_neighbors(self, target: str, relation: str) -> Observation:
        m = _DIRECTED.match(relation)
        if not m:
            raise UnknownRelation(f"unknown relation {relation!r}")
        name, direction = m.group(1), m.group(2)
        info = self._relation(name)
        expr, ents = self._entities(target)
        if direction is None:
            out = any(name in self.graph.outgoing_relations(e) for e in ents)
            inc = any(name in self.graph.incoming_relations(e) for e in ents)
            if out and inc:
                raise ResolveError(f"{name} is both outgoing and incoming here; add ' (outgoing)' or ' (incoming)'")
            if not (out or inc):
                raise UnknownRelation(f"{name} is not connected to {target.strip()}")
            direction = "outgoing" if out else "incoming"
        if direction == "outgoing":
            var = self._new_variable(Join(Reverse(RelationAtom(name)), expr), info.range)
        else:
            var = self._new_variable(Join(RelationAtom(name), expr), info.domain)
        return Observation("variable", (var.id, var.cls))

    def intersection(self, first: str, second: str) -> Observation:
        a, b = self._var_arg(first), self._var_arg(second)
        if a.cls != b.cls and not self._share_class(a, b):
            raise TypeMismatch(f"#{a.id} holds {a.cls} but #{b.id} holds {b.cls}")
        var = self._new_variable(And(a.sexpr, b.sexpr), a.cls)
        return Observation("variable", (var.id, var.cls))

    def _share_class(self, a: Variable, b: Variable) -> bool:
        members = [x for x in a.denotation.value | b.denotation.value if isinstance(x, str)]
        if not members:
            return False
        common = set(self.graph.classes_of(members[0]))
        for x in members[1:]:
            common &= self.graph.classes_of(x)
        return bool(common)

    def _var_arg(self, arg: str) -> Variable:
        arg = arg.strip()
        m = _VARIABLE.match(arg)
        if m:
            return self.variable(int(m.group(1)))
        expr, den = self.resolve(arg)
        classes = sorted({c for x in den.value if isinstance(x, str) for c in self.graph.classes_of(x)})
        return Variable(-1, den, expr, classes[0] if classes else "")

    def get_attributes(self, target: str) -> Observation:
        _, ents = self._entities(target)
        names = set()
        for e in ents:
            names |= {r for r in self.graph.outgoing_relations(e) if self.graph.schema.relation(r).literal_range}
        return Observation("list", (tuple(self._rank(self.query, names, None)),))

    def _superlative(self, op, target: str, attribute: str) -> Observation:
        info = self._relation(attribute.strip())
        if not info.literal_range:
            raise UnknownRelation(f"{info.name} is not a numeric attribute")
        var = self._var_arg(target)
        new = self._new_variable(op(var.sexpr, RelationAtom(info.name)), var.cls)
        return Observation("variable", (new.id, new.cls))

    def argmax(self, target: str, attribute: str) -> Observation:
        return self._superlative(ArgMax, target, attribute)

    def argmin(self, target: str, attribute: str) -> Observation:
        return self._superlative(ArgMin, target, attribute)

    def count(self, target: str) -> Observation:
        from .sexpr import Count
        var = self._var_arg(target)
        den = evaluate(Count(var.sexpr), self.graph)
        new = Variable(len(self.variables), den, Count(var.sexpr), "type.int")
        self.variables.append(new)
        return Observation("number", (new.id, den.value))

    def compare(self, op: str, attribute: str, value: str) -> Observation:
        info = self._relation(attribute.strip())
        if not info.literal_range:
            raise UnknownRelation(f"{info.name} is not a numeric attribute")
        value = value.strip()
        if "^^" in value:
            lit = parse_sexpr(value)
        else:
            dtype = literal_datatype(info.range)
            if not dtype.startswith(XSD):
                dtype = XSD + ("float" if "." in value else "integer")
            lit = LiteralAtom(value, dtype)
        if not isinstance(lit, LiteralAtom):
            raise ResolveError(f"{value!r} is not a literal")
        expr = COMPARISONS[op.upper()](RelationAtom(info.name), lit)
        var = self._new_variable(expr, info.domain)
        return Observation("variable", (var.id, var.cls))

    # -- dispatch -----------------------------------------------------------

    def execute(self, name: str, args: list[str], profile: str = "dara") -> Observation:
        """Run one action, log it and return its observation.

        Failures raise; the caller decides how to surface them.
        """
        allowed = PROFILE_ACTIONS.get(profile, ())
        if name not in allowed:
            raise UnknownAction(f"{name} is not available (choose from {', '.join(allowed)})")
        baseline = profile != "dara"
        if name in TEXT_ACTIONS:
            args = [", ".join(args)]

        def need(n: int):
            if len(args) != n:
                raise ResolveError(f"{name} takes {n} argument(s), got {len(args)}")

        if name == "get_descriptions":
            obs = self.get_descriptions(args)
        elif name == "get_relations":
            need(1)
            obs = self.list_relations(args[0]) if baseline else self.get_relations(args[0])
        elif name == "get_classes":
            need(1)
            obs = self.list_classes(args[0]) if baseline else self.get_classes(args[0])
        elif name in ("get_relevant_relations", "get_relevant_classes", "get_relevant_attributes"):
            need(1)
            obs = getattr(self, name)(args[0])
        elif name in ("get_neighbors", "intersection", "argmax", "argmin"):
            need(2)
            obs = getattr(self, name)(*args)
        elif name in ("get_attributes", "count"):
            need(1)
            obs = getattr(self, name)(args[0])
        elif name in ("lt", "le", "gt", "ge"):
            need(2)
            obs = self.compare(name, *args)
        else:  # pragma: no cover - guarded by the profile table
            raise UnknownAction(name)
        self.log.append(LogEntry(name, tuple(args), obs))
        return obs


def split_arguments(text: str) -> list[str]:
    """Split on top-level commas, keeping parenthesised groups intact."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    return parts
