"""Schema metadata: relations, classes, class membership."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from ..errors import GraphParseError, SchemaViolation
from ..sexpr import XSD

logger = logging.getLogger(__name__)

# Freebase value types that stand for literals rather than entity classes
FREEBASE_LITERAL_TYPES = frozenset({
    "type.int", "type.float", "type.datetime", "type.text", "type.boolean",
    "type.rawstring", "type.uri", "type.enumeration",
})


# datatype IRI used for literals whose relation range is a Freebase value type
_FREEBASE_TO_XSD = {
    "type.int": "integer", "type.float": "float", "type.datetime": "dateTime",
    "type.text": "string", "type.boolean": "boolean", "type.rawstring": "string",
    "type.uri": "anyURI", "type.enumeration": "string",
}


def is_literal_type(name: str) -> bool:
    return name.startswith(XSD) or name.startswith("xsd:") or name in FREEBASE_LITERAL_TYPES


def literal_datatype(range_name: str) -> str:
    """XSD datatype IRI for a literal-valued relation range."""
    if range_name in _FREEBASE_TO_XSD:
        return XSD + _FREEBASE_TO_XSD[range_name]
    if range_name.startswith("xsd:"):
        return XSD + range_name[4:]
    return range_name


@dataclass(frozen=True)
class RelationInfo:
    name: str
    description: str
    domain: str
    range: str
    # True when the range class is a mediator (CVT) node
    mediator: bool = False

    @property
    def literal_range(self) -> bool:
        return is_literal_type(self.range)


@dataclass(frozen=True)
class ClassInfo:
    name: str
    description: str
    mediator: bool = False


class SchemaView:
    """Read-only view of the schema of a knowledge graph."""

    def __init__(
        self,
        relations: Iterable[RelationInfo],
        classes: Iterable[ClassInfo],
        instances: Mapping[str, Iterable[str]] | None = None,
    ):
        self._relations = {r.name: r for r in relations}
        self._classes = {c.name: c for c in classes}
        membership = {e: frozenset(cs) for e, cs in (instances or {}).items()}
        self.relations = MappingProxyType(self._relations)
        self.classes = MappingProxyType(self._classes)
        self.membership = MappingProxyType(membership)

        by_class: dict[str, set[str]] = {}
        for entity, cs in membership.items():
            for c in cs:
                by_class.setdefault(c, set()).add(entity)
        self._instances = {c: frozenset(es) for c, es in by_class.items()}
        self._mediators = frozenset(
            {c.name for c in self._classes.values() if c.mediator}
            | {r.range for r in self._relations.values() if r.mediator}
        )
        self.warnings = tuple(self._validate())

    def _validate(self) -> list[str]:
        offenders = []
        for r in self._relations.values():
            if r.domain not in self._classes:
                offenders.append(f"{r.name} (domain {r.domain})")
            if not r.literal_range and r.range not in self._classes:
                offenders.append(f"{r.name} (range {r.range})")
        for entity, cs in self.membership.items():
            offenders.extend(f"{entity} (class {c})" for c in cs if c not in self._classes)
        if offenders:
            raise SchemaViolation("schema refers to undeclared classes", offenders)
        warnings = [f"relation {r.name} has no description" for r in self._relations.values() if not r.description]
        warnings += [f"class {c.name} has no description" for c in self._classes.values() if not c.description]
        for w in warnings:
            logger.warning(w)
        return warnings

    def has_class(self, name: str) -> bool:
        return name in self._classes

    def has_relation(self, name: str) -> bool:
        return name in self._relations

    def relation(self, name: str) -> RelationInfo:
        return self._relations[name]

    def cls(self, name: str) -> ClassInfo:
        return self._classes[name]

    def is_mediator(self, class_name: str | None) -> bool:
        return class_name in self._mediators

    def instances(self, class_name: str) -> frozenset[str]:
        return self._instances.get(class_name, frozenset())

    def classes_of(self, entity: str) -> frozenset[str]:
        return self.membership.get(entity, frozenset())

    @property
    def attributes(self) -> list[str]:
        """Relations whose range is a literal datatype."""
        return [r.name for r in self._relations.values() if r.literal_range]

    def to_dict(self) -> dict:
        return {
            "relations": [
                {"name": r.name, "description": r.description, "domain": r.domain,
                 "range": r.range, "mediator": r.mediator}
                for r in self._relations.values()
            ],
            "classes": [
                {"name": c.name, "description": c.description, "mediator": c.mediator}
                for c in self._classes.values()
            ],
            "instances": {e: sorted(cs) for e, cs in sorted(self.membership.items())},
        }


def schema_from_dict(doc: Mapping) -> tuple[SchemaView, dict[str, str]]:
    """Build a schema (and the label map) from the JSON schema document."""
    try:
        relations = [
            RelationInfo(
                name=r["name"],
                description=r.get("description", ""),
                domain=r["domain"],
                range=r["range"],
                mediator=bool(r.get("mediator", False)),
            )
            for r in doc.get("relations", [])
        ]
        classes = [
            ClassInfo(c["name"], c.get("description", ""), bool(c.get("mediator", False)))
            for c in doc.get("classes", [])
        ]
    except KeyError as exc:
        raise SchemaViolation("schema entry missing field", [str(exc)]) from None
    instances = {e: list(cs) for e, cs in doc.get("instances", {}).items()}
    labels = dict(doc.get("labels", {}))
    return SchemaView(relations, classes, instances), labels


def load_schema(path: str | Path) -> tuple[SchemaView, dict[str, str]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    return schema_from_dict(doc)
