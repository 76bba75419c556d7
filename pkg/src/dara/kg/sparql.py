"""Compile bound logical forms to SPARQL SELECT queries."""

from __future__ import annotations

from ..errors import TypeMismatch, UnboundRef, UnsupportedForm
from ..sexpr import (
    XSD, And, ArgMax, ClassAtom, Comparison, Count, EntityAtom, Join, LiteralAtom,
    Ref, RelationAtom, Reverse, SchemaLike, SExpr, Superlative, bind,
)
from .graph import TYPE_PREDICATE

NS = "http://rdf.freebase.com/ns/"
PREFIXES = f"PREFIX ns: <{NS}>\nPREFIX xsd: <{XSD}>\n"

_OPS = {"LT": "<", "LE": "<=", "GT": ">", "GE": ">="}


def literal_term(lit: LiteralAtom) -> str:
    value = lit.value.replace("\\", "\\\\").replace('"', '\\"')
    if lit.datatype.startswith(XSD):
        return f'"{value}"^^xsd:{lit.datatype[len(XSD):]}'
    return f'"{value}"^^<{lit.datatype}>'


def _constant(e: SExpr) -> str | None:
    if isinstance(e, EntityAtom):
        return "ns:" + e.id
    if isinstance(e, LiteralAtom):
        return literal_term(e)
    return None


def _is_binary(e: SExpr) -> bool:
    if isinstance(e, (RelationAtom, Reverse)):
        return True
    return isinstance(e, Join) and _is_binary(e.arg)


class _Compiler:
    def __init__(self):
        self.n = 0

    def fresh(self) -> str:
        v = f"?x{self.n}"
        self.n += 1
        return v

    def unary(self, e: SExpr, v: str) -> list[str]:
        const = _constant(e)
        if const is not None:
            return [f"VALUES {v} {{ {const} }}"]
        if isinstance(e, ClassAtom):
            return [f"{v} ns:{TYPE_PREDICATE} ns:{e.name} ."]
        if isinstance(e, And):
            return self.unary(e.left, v) + self.unary(e.right, v)
        if isinstance(e, Join):
            if _is_binary(e.arg):
                raise TypeMismatch(f"binary JOIN used as an entity set: {e}")
            const = _constant(e.arg)
            if const is not None:
                return self.binary(e.path, v, const)
            y = self.fresh()
            return self.binary(e.path, v, y) + self.unary(e.arg, y)
        if isinstance(e, Comparison):
            w = self.fresh()
            return self.binary(e.attribute, v, w) + [
                f"FILTER (isNumeric({w}) && {w} {_OPS[e.op]} {literal_term(e.value)})"
            ]
        if isinstance(e, Superlative):
            agg = "MAX" if isinstance(e, ArgMax) else "MIN"
            w = self.fresh()
            outer = self.unary(e.arg, v) + self.binary(e.attribute, v, w)
            v2, w2, m = self.fresh(), self.fresh(), self.fresh()
            inner = self.unary(e.arg, v2) + self.binary(e.attribute, v2, w2)
            inner.append(f"FILTER (isNumeric({w2}))")
            sub = f"{{ SELECT ({agg}({w2}) AS {m}) WHERE {{ {' '.join(inner)} }} }}"
            return outer + [sub, f"FILTER (isNumeric({w}) && {w} = {m})"]
        if isinstance(e, Count):
            raise UnsupportedForm("COUNT is only supported at the top level")
        if isinstance(e, Ref):
            raise UnboundRef(e.id)
        raise TypeMismatch(f"expected an entity set, got {e}")

    def binary(self, e: SExpr, s: str, o: str) -> list[str]:
        if isinstance(e, RelationAtom):
            return [f"{s} ns:{e.name} {o} ."]
        if isinstance(e, Reverse):
            return self.binary(e.arg, o, s)
        if isinstance(e, Join):
            y = self.fresh()
            return self.binary(e.path, s, y) + self.binary(e.arg, y, o)
        if isinstance(e, Ref):
            raise UnboundRef(e.id)
        raise TypeMismatch(f"expected a binary expression, got {e}")


def _block(clauses: list[str]) -> str:
    return "WHERE {\n" + "".join(f"  {c}\n" for c in clauses) + "}"


def compile_sparql(expr: SExpr, schema: SchemaLike | None = None) -> str:
    """Translate ``expr`` into a query whose result set equals its denotation.

    Variables are numbered ``?x0, ?x1, ...`` in the order they are introduced,
    so the output is a pure function of the expression.
    """
    if schema is not None:
        expr = bind(expr, schema)
    c = _Compiler()
    if isinstance(expr, Count):
        if _is_binary(expr.arg):
            raise TypeMismatch("COUNT of a binary expression")
        v = c.fresh()
        head = f"SELECT (COUNT(DISTINCT {v}) AS ?count)"
        body = c.unary(expr.arg, v)
    elif _is_binary(expr):
        s, o = c.fresh(), c.fresh()
        head = f"SELECT DISTINCT {s} {o}"
        body = c.binary(expr, s, o)
    else:
        v = c.fresh()
        head = f"SELECT DISTINCT {v}"
        body = c.unary(expr, v)
    return f"{PREFIXES}{head}\n{_block(body)}\n"
