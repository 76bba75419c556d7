"""Set-semantics evaluation of bound logical forms against an in-memory graph."""

from __future__ import annotations

from decimal import Decimal

from ..errors import TypeMismatch, UnboundRef
from ..sexpr import (
    And, ClassAtom, Comparison, Count, EntityAtom, Join, LiteralAtom, Ref,
    RelationAtom, Reverse, SExpr, Superlative, ArgMax, bind, walk,
)
from .graph import Denotation, KnowledgeGraph, Node

_TESTS = {
    "LT": lambda a, b: a < b,
    "LE": lambda a, b: a <= b,
    "GT": lambda a, b: a > b,
    "GE": lambda a, b: a >= b,
}


def numeric_value(node: Node) -> Decimal | None:
    """Decimal value of a numeric literal node, else ``None``."""
    if isinstance(node, LiteralAtom) and node.is_numeric:
        try:
            return node.number()
        except TypeMismatch:
            return None
    return None


class _Evaluator:
    def __init__(self, graph: KnowledgeGraph):
        self.graph = graph
        self.memo: dict[SExpr, frozenset] = {}

    def unary(self, e: SExpr) -> frozenset:
        if e in self.memo:
            return self.memo[e]
        out = self._unary(e)
        self.memo[e] = out
        return out

    def _unary(self, e: SExpr) -> frozenset:
        g = self.graph
        if isinstance(e, EntityAtom):
            return frozenset({e.id})
        if isinstance(e, LiteralAtom):
            return frozenset({e})
        if isinstance(e, ClassAtom):
            return g.instances(e.name)
        if isinstance(e, And):
            return self.unary(e.left) & self.unary(e.right)
        if isinstance(e, Join):
            targets = self.unary(e.arg)
            return frozenset(x for x, y in self.binary(e.path) if y in targets)
        if isinstance(e, Comparison):
            bound = e.value.number()
            test = _TESTS[e.op]
            out = set()
            for x, v in self.binary(e.attribute):
                n = numeric_value(v)
                if n is not None and test(n, bound):
                    out.add(x)
            return frozenset(out)
        if isinstance(e, Superlative):
            members = self.unary(e.arg)
            pick = max if isinstance(e, ArgMax) else min
            scores: dict[Node, Decimal] = {}
            for x, v in self.binary(e.attribute):
                n = numeric_value(v)
                if x in members and n is not None:
                    scores[x] = pick(scores[x], n) if x in scores else n
            if not scores:
                return frozenset()
            best = pick(scores.values())
            return frozenset(x for x, s in scores.items() if s == best)
        if isinstance(e, Count):
            raise TypeMismatch(f"COUNT result used as an entity set: {e}")
        if isinstance(e, Ref):
            raise UnboundRef(e.id)
        raise TypeMismatch(f"expected an entity set, got {e}")

    def binary(self, e: SExpr) -> frozenset:
        if e in self.memo:
            return self.memo[e]
        out = self._binary(e)
        self.memo[e] = out
        return out

    def _binary(self, e: SExpr) -> frozenset:
        if isinstance(e, RelationAtom):
            return self.graph.pairs(e.name)
        if isinstance(e, Reverse):
            return frozenset((y, x) for x, y in self.binary(e.arg))
        if isinstance(e, Join):
            right: dict[Node, list[Node]] = {}
            for y, z in self.binary(e.arg):
                right.setdefault(y, []).append(z)
            return frozenset((x, z) for x, y in self.binary(e.path) for z in right.get(y, ()))
        if isinstance(e, Ref):
            raise UnboundRef(e.id)
        raise TypeMismatch(f"expected a binary expression, got {e}")


def _is_binary(e: SExpr) -> bool:
    if isinstance(e, (RelationAtom, Reverse)):
        return True
    return isinstance(e, Join) and _is_binary(e.arg)


def evaluate(expr: SExpr, graph: KnowledgeGraph) -> Denotation:
    """Evaluate ``expr`` on ``graph``.

    Atoms are bound against the graph schema first. Superlatives
    keep every tied entity; comparatives hold when any attribute value passes.
    """
    expr = bind(expr, graph.schema)
    for node in walk(expr):
        if isinstance(node, Ref):
            raise UnboundRef(node.id)
    ev = _Evaluator(graph)
    if isinstance(expr, Count):
        if _is_binary(expr.arg):
            raise TypeMismatch("COUNT of a binary expression")
        return Denotation.count(len(ev.unary(expr.arg)))
    if _is_binary(expr):
        return Denotation.binary(ev.binary(expr))
    return Denotation.unary(ev.unary(expr))
