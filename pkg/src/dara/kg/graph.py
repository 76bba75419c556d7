"""Immutable in-memory triple store."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Union

from ..errors import GraphParseError, SchemaViolation
from ..sexpr import LiteralAtom
from .schema import SchemaView, is_literal_type, literal_datatype, load_schema

logger = logging.getLogger(__name__)

TYPE_PREDICATE = "type.object.type"

Node = Union[str, LiteralAtom]
Triple = tuple[str, str, Node]


def node_text(node: Node) -> str:
    if isinstance(node, LiteralAtom):
        return f"{node.value}^^{node.datatype}"
    return node


@dataclass(frozen=True)
class Denotation:
    """Result of evaluating a logical form.

    ``kind`` is ``unary`` (a set of nodes), ``binary`` (a set of pairs) or
    ``count`` (a non-negative integer).
    """

    kind: str
    value: frozenset | int

    @classmethod
    def unary(cls, items: Iterable[Node]) -> "Denotation":
        return cls("unary", frozenset(items))

    @classmethod
    def binary(cls, pairs: Iterable[tuple[Node, Node]]) -> "Denotation":
        return cls("binary", frozenset(pairs))

    @classmethod
    def count(cls, n: int) -> "Denotation":
        if n < 0:
            raise ValueError("count must be non-negative")
        return cls("count", int(n))

    def __len__(self) -> int:
        return self.value if self.kind == "count" else len(self.value)

    def answers(self) -> set[str]:
        """String form used for answer-level scoring."""
        if self.kind == "count":
            return {str(self.value)}
        if self.kind == "binary":
            return {f"{node_text(a)}\t{node_text(b)}" for a, b in self.value}
        return {node_text(x) for x in self.value}

    def summary(self, limit: int = 5) -> str:
        if self.kind == "count":
            return str(self.value)
        items = sorted(self.answers())
        head = ", ".join(items[:limit])
        more = f", ... ({len(items)} total)" if len(items) > limit else ""
        return f"[{head}{more}]"


class KnowledgeGraph:
    """A set of triples plus its schema and entity labels.

    Objects are entity ids (``str``) or :class:`~dara.sexpr.LiteralAtom`.
    Class membership lives in the schema; it is also exposed to queries as
    ``type.object.type`` edges.
    """

    def __init__(self, triples: Iterable[Triple], schema: SchemaView,
                 labels: Mapping[str, str] | None = None):
        self.schema = schema
        self.triples = frozenset(triples)
        unknown = {p for _, p, _ in self.triples if not schema.has_relation(p)}
        if unknown:
            raise SchemaViolation("triples use predicates missing from the schema", list(unknown))

        by_rel: dict[str, set[tuple[str, Node]]] = {}
        out_idx: dict[str, dict[str, set[Node]]] = {}
        in_idx: dict[Node, dict[str, set[str]]] = {}
        for s, p, o in self.triples:
            by_rel.setdefault(p, set()).add((s, o))
            out_idx.setdefault(s, {}).setdefault(p, set()).add(o)
            in_idx.setdefault(o, {}).setdefault(p, set()).add(s)
        self._by_rel = {p: frozenset(v) for p, v in by_rel.items()}
        self._out = out_idx
        self._in = in_idx
        self.labels = MappingProxyType(dict(labels or {}))
        self._by_label: dict[str, list[str]] = {}
        for entity, label in sorted(self.labels.items()):
            self._by_label.setdefault(label.lower(), []).append(entity)

    def __repr__(self) -> str:
        s = self.stats()
        return f"KnowledgeGraph({s['triples']} triples, {s['relations']} relations, {s['classes']} classes)"

    def stats(self) -> dict[str, int]:
        return {
            "triples": len(self.triples),
            "relations": len(self.schema.relations),
            "classes": len(self.schema.classes),
            "entities": len(self.entities()),
        }

    def pairs(self, relation: str) -> frozenset[tuple[str, Node]]:
        return self._by_rel.get(relation, frozenset())

    def objects(self, subject: str, relation: str) -> frozenset[Node]:
        return frozenset(self._out.get(subject, {}).get(relation, ()))

    def outgoing_relations(self, entity: Node) -> set[str]:
        return set(self._out.get(entity, {})) if isinstance(entity, str) else set()

    def incoming_relations(self, entity: Node) -> set[str]:
        return set(self._in.get(entity, {}))

    def instances(self, class_name: str) -> frozenset[str]:
        return self.schema.instances(class_name)

    def classes_of(self, entity: Node) -> frozenset[str]:
        return self.schema.classes_of(entity) if isinstance(entity, str) else frozenset()

    def entities(self) -> set[str]:
        out = {s for s, _, _ in self.triples}
        out |= {o for _, _, o in self.triples if isinstance(o, str)}
        out |= set(self.schema.membership)
        return out

    def label(self, entity: str) -> str | None:
        return self.labels.get(entity)

    def find_by_label(self, label: str) -> list[str]:
        return list(self._by_label.get(label.strip().lower(), []))

    def all_triples(self) -> Iterable[Triple]:
        """Stored triples followed by class-membership edges."""
        yield from self.triples
        for entity, classes in self.schema.membership.items():
            for c in classes:
                yield entity, TYPE_PREDICATE, c


def parse_node(text: str, relation_range: str | None = None) -> Node:
    if "^^" in text:
        value, _, datatype = text.rpartition("^^")
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        return LiteralAtom(value, datatype)
    if relation_range is not None and is_literal_type(relation_range):
        return LiteralAtom(text, literal_datatype(relation_range))
    return text


def read_triples(path: str | Path, schema: SchemaView) -> list[Triple]:
    """Read a tab-separated ``subject<TAB>predicate<TAB>object`` file."""
    path = Path(path)
    triples: list[Triple] = []
    unknown: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise GraphParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno, str(path))
            s, p, o = (x.strip() for x in parts)
            if not schema.has_relation(p):
                unknown.add(p)
                continue
            triples.append((s, p, parse_node(o, schema.relation(p).range)))
    if unknown:
        raise SchemaViolation(f"{path.name} uses predicates missing from the schema", list(unknown))
    return triples


def load_graph(triples_path: str | Path, schema_path: str | Path) -> KnowledgeGraph:
    schema, labels = load_schema(schema_path)
    graph = KnowledgeGraph(read_triples(triples_path, schema), schema, labels)
    logger.info("loaded %r", graph)
    return graph
