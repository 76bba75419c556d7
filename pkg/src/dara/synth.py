"""Random graphs and well-typed logical forms for property tests and corpora."""

from __future__ import annotations

import random

from .kg.graph import KnowledgeGraph
from .kg.schema import ClassInfo, RelationInfo, SchemaView
from .sexpr import (
    XSD, And, ArgMax, ArgMin, ClassAtom, Count, EntityAtom, Ge, Gt, Join, Le,
    LiteralAtom, Lt, RelationAtom, Reverse, SExpr,
)

_COMPARISONS = (Lt, Le, Gt, Ge)


def random_graph(
    rng: random.Random,
    n_entities: int = 30,
    n_relations: int = 8,
    n_attributes: int = 3,
    n_classes: int = 5,
    density: float = 0.15,
) -> KnowledgeGraph:
    """Build a small random graph.

    Numeric attributes are functional (at most one value per entity), with
    values drawn from a narrow range so ties are common. One class is
    flagged as a mediator.
    """
    if n_entities > 50 or n_relations + n_attributes > 12:
        raise ValueError("random graphs are capped at 50 entities and 12 relations")
    classes = [ClassInfo(f"cls.k{i}", f"class k{i}", mediator=(i == n_classes - 1)) for i in range(n_classes)]
    entities = [f"m.e{i}" for i in range(n_entities)]
    membership: dict[str, list[str]] = {}
    for e in entities:
        picked = rng.sample(classes, min(len(classes), rng.choice((1, 1, 2))))
        membership[e] = sorted(c.name for c in picked)
    by_class: dict[str, list[str]] = {}
    for e, cs in membership.items():
        for c in cs:
            by_class.setdefault(c, []).append(e)

    relations: list[RelationInfo] = []
    triples = []
    for i in range(n_relations):
        dom, rng_cls = rng.choice(classes), rng.choice(classes)
        rel = RelationInfo(f"rel.r{i}", f"relation r{i}", dom.name, rng_cls.name)
        relations.append(rel)
        for s in by_class.get(dom.name, []):
            for o in by_class.get(rng_cls.name, []):
                if rng.random() < density:
                    triples.append((s, rel.name, o))
    for i in range(n_attributes):
        dom = rng.choice(classes)
        dtype = XSD + rng.choice(("integer", "float"))
        rel = RelationInfo(f"attr.a{i}", f"attribute a{i}", dom.name, dtype)
        relations.append(rel)
        for s in by_class.get(dom.name, []):
            if rng.random() < 0.7:
                v = rng.randint(0, 6)
                lex = str(v) if dtype.endswith("integer") else f"{v}.0"
                triples.append((s, rel.name, LiteralAtom(lex, dtype)))
    labels = {e: f"entity {e[2:]}" for e in entities}
    return KnowledgeGraph(triples, SchemaView(relations, classes, membership), labels)


class ExprGenerator:
    """Random well-typed expressions over the vocabulary of one graph."""

    def __init__(self, graph: KnowledgeGraph, rng: random.Random):
        self.rng = rng
        schema = graph.schema
        self.entities = sorted(graph.entities()) or ["m.none"]
        self.classes = sorted(schema.classes)
        self.relations = sorted(r.name for r in schema.relations.values() if not r.literal_range)
        self.attributes = sorted(schema.attributes)

    def literal(self) -> LiteralAtom:
        v = self.rng.randint(-1, 7)
        if self.rng.random() < 0.5:
            return LiteralAtom(str(v), XSD + "integer")
        return LiteralAtom(f"{v}.{self.rng.choice((0, 5))}", XSD + "float")

    def binary(self, depth: int) -> SExpr:
        roll = self.rng.random()
        if depth <= 0 or roll < 0.5:
            return RelationAtom(self.rng.choice(self.relations))
        if roll < 0.8:
            return Reverse(self.binary(depth - 1))
        return Join(self.binary(depth - 1), self.binary(depth - 1))

    def unary(self, depth: int) -> SExpr:
        rng = self.rng
        if depth <= 0:
            return EntityAtom(rng.choice(self.entities)) if rng.random() < 0.5 else ClassAtom(rng.choice(self.classes))
        roll = rng.random()
        if roll < 0.15:
            return EntityAtom(rng.choice(self.entities))
        if roll < 0.3:
            return ClassAtom(rng.choice(self.classes))
        if roll < 0.45:
            return And(self.unary(depth - 1), self.unary(depth - 1))
        if roll < 0.75 or not self.attributes:
            return Join(self.binary(depth - 1), self.unary(depth - 1))
        if roll < 0.87:
            return rng.choice(_COMPARISONS)(RelationAtom(rng.choice(self.attributes)), self.literal())
        op = ArgMax if rng.random() < 0.5 else ArgMin
        return op(self.unary(depth - 1), RelationAtom(rng.choice(self.attributes)))

    def expression(self, depth: int = 3) -> SExpr:
        roll = self.rng.random()
        if roll < 0.15:
            return Count(self.unary(depth))
        if roll < 0.25:
            return self.binary(depth)
        return self.unary(depth)


def random_cases(seed: int, n: int, depth: int = 3, per_graph: int = 25):
    """Yield ``(graph, expr)`` pairs, switching to a fresh graph every ``per_graph`` items."""
    rng = random.Random(seed)
    graph = gen = None
    for i in range(n):
        if i % per_graph == 0:
            graph = random_graph(
                rng,
                n_entities=rng.randint(5, 50),
                n_relations=rng.randint(2, 8),
                n_attributes=rng.randint(1, 3),
                n_classes=rng.randint(2, 6),
            )
            gen = ExprGenerator(graph, rng)
        yield graph, gen.expression(rng.randint(1, depth))
