"""A small SPARQL engine over an in-memory graph.

Supports the subset produced by :func:`dara.kg.sparql.compile_sparql`:
``PREFIX``, ``SELECT [DISTINCT]`` with variables or ``COUNT``/``MAX``/``MIN``
aggregates, basic graph patterns, ``VALUES``, ``FILTER`` and sub-selects.
It works on RDF terms built from ``graph.all_triples()`` and is kept apart
from the set-based evaluator so the two can check each other.
"""

from __future__ import annotations

import re
import weakref
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from ..errors import QueryParseError
from ..sexpr import LiteralAtom
from .graph import Denotation, KnowledgeGraph

XSD_NS = "http://www.w3.org/2001/XMLSchema#"
NS = "http://rdf.freebase.com/ns/"
_NUMERIC = {XSD_NS + t for t in (
    "integer", "int", "long", "short", "byte", "decimal", "float", "double",
    "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
    "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte",
)}

# RDF terms: ("iri", iri) or ("lit", lexical, datatype-iri)
Term = tuple

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<iri><[^<>\s]*>)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<dt>\^\^)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>[+-]?\d+(?:\.\d+)?)
  | (?P<op><=|>=|!=|&&|\|\||[<>=!])
  | (?P<punct>[{}().,;*])
  | (?P<pname>[A-Za-z_][\w-]*:(?:[\w.-]*[\w-])?|[A-Za-z_][\w-]*:)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out, i = [], 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise QueryParseError(f"unexpected character {text[i]!r} at offset {i}")
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), i))
        i = m.end()
    return out


# -- query model --------------------------------------------------------------

@dataclass
class _Projection:
    var: str
    agg: str | None = None      # COUNT / MAX / MIN
    arg: str | None = None
    distinct: bool = False


@dataclass
class _Query:
    distinct: bool
    projections: list[_Projection]
    where: list = field(default_factory=list)


@dataclass
class _Triple:
    s: object
    p: object
    o: object


@dataclass
class _Values:
    var: str
    terms: list


@dataclass
class _Filter:
    expr: object


@dataclass
class _Sub:
    query: _Query


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}

    def peek(self, offset: int = 0) -> _Tok | None:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise QueryParseError("unexpected end of query")
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text.upper() != text.upper():
            raise QueryParseError(f"expected {text!r} at offset {tok.pos}, got {tok.text!r}")
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text.upper() == text.upper()

    def parse(self) -> _Query:
        while self.at("PREFIX"):
            self.next()
            name = self.next()
            if name.kind != "pname" or not name.text.endswith(":"):
                raise QueryParseError(f"bad prefix name {name.text!r}")
            iri = self.next()
            if iri.kind != "iri":
                raise QueryParseError(f"expected IRI after PREFIX {name.text}")
            self.prefixes[name.text[:-1]] = iri.text[1:-1]
        q = self.select()
        if self.peek() is not None:
            raise QueryParseError(f"trailing input at offset {self.peek().pos}")
        return q

    def select(self) -> _Query:
        self.expect("SELECT")
        distinct = False
        if self.at("DISTINCT"):
            self.next()
            distinct = True
        projections = []
        while not self.at("WHERE") and not self.at("{"):
            tok = self.next()
            if tok.kind == "var":
                projections.append(_Projection(tok.text))
            elif tok.text == "(":
                agg = self.next().text.upper()
                if agg not in ("COUNT", "MAX", "MIN"):
                    raise QueryParseError(f"unsupported aggregate {agg}")
                self.expect("(")
                d = False
                if self.at("DISTINCT"):
                    self.next()
                    d = True
                arg = self.next()
                if arg.kind != "var":
                    raise QueryParseError("aggregate argument must be a variable")
                self.expect(")")
                self.expect("AS")
                alias = self.next()
                if alias.kind != "var":
                    raise QueryParseError("aggregate alias must be a variable")
                self.expect(")")
                projections.append(_Projection(alias.text, agg, arg.text, d))
            else:
                raise QueryParseError(f"unexpected {tok.text!r} in projection")
        if not projections:
            raise QueryParseError("empty projection")
        if self.at("WHERE"):
            self.next()
        return _Query(distinct, projections, self.group())

    def group(self) -> list:
        self.expect("{")
        items: list = []
        while not self.at("}"):
            if self.at("FILTER"):
                self.next()
                items.append(_Filter(self.primary()))
            elif self.at("VALUES"):
                self.next()
                var = self.next()
                if var.kind != "var":
                    raise QueryParseError("VALUES needs a variable")
                self.expect("{")
                terms = []
                while not self.at("}"):
                    terms.append(self.term())
                self.next()
                items.append(_Values(var.text, terms))
            elif self.at("{"):
                self.next()
                items.append(_Sub(self.select()))
                self.expect("}")
            else:
                s, p, o = self.term(), self.term(), self.term()
                items.append(_Triple(s, p, o))
                if self.at("."):
                    self.next()
        self.next()
        return items

    def term(self):
        tok = self.next()
        if tok.kind == "var":
            return tok.text
        if tok.kind == "iri":
            return ("iri", tok.text[1:-1])
        if tok.kind == "pname":
            prefix, _, local = tok.text.partition(":")
            if prefix not in self.prefixes:
                raise QueryParseError(f"undeclared prefix {prefix!r}")
            return ("iri", self.prefixes[prefix] + local)
        if tok.kind == "str":
            lexical = re.sub(r"\\(.)", r"\1", tok.text[1:-1])
            if self.at("^^"):
                self.next()
                dt = self.term()
                if not isinstance(dt, tuple) or dt[0] != "iri":
                    raise QueryParseError("datatype must be an IRI")
                return ("lit", lexical, dt[1])
            return ("lit", lexical, XSD_NS + "string")
        if tok.kind == "num":
            dt = "decimal" if "." in tok.text else "integer"
            return ("lit", tok.text, XSD_NS + dt)
        raise QueryParseError(f"expected a term at offset {tok.pos}, got {tok.text!r}")

    # filter expressions: nested tuples (op, args...)
    def expr(self):
        left = self.conj()
        while self.at("||"):
            self.next()
            left = ("||", left, self.conj())
        return left

    def conj(self):
        left = self.rel()
        while self.at("&&"):
            self.next()
            left = ("&&", left, self.rel())
        return left

    def rel(self):
        left = self.primary()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text not in ("&&", "||", "!"):
            self.next()
            return (tok.text, left, self.primary())
        return left

    def primary(self):
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("!"):
            self.next()
            return ("!", self.primary())
        tok = self.peek()
        if tok is not None and tok.kind == "word" and tok.text.lower() == "isnumeric":
            self.next()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return ("isNumeric", arg)
        return ("term", self.term())


# -- evaluation -----------------------------------------------------------------

class _EvalError(Exception):
    pass


def _number(t) -> Decimal | None:
    if isinstance(t, tuple) and t[0] == "lit" and t[2] in _NUMERIC:
        try:
            return Decimal(t[1])
        except InvalidOperation:
            return None
    return None


def _eval_filter(e, row: dict):
    op = e[0]
    if op == "term":
        t = e[1]
        if isinstance(t, str):
            if t not in row:
                raise _EvalError(f"unbound {t}")
            return row[t]
        return t
    if op == "isNumeric":
        return _number(_eval_filter(e[1], row)) is not None
    if op == "!":
        return not _truth(_eval_filter(e[1], row))
    if op == "&&":
        return _truth(_eval_filter(e[1], row)) and _truth(_eval_filter(e[2], row))
    if op == "||":
        return _truth(_eval_filter(e[1], row)) or _truth(_eval_filter(e[2], row))
    a, b = _eval_filter(e[1], row), _eval_filter(e[2], row)
    na, nb = _number(a), _number(b)
    if na is not None and nb is not None:
        a, b = na, nb
    elif op in ("=", "!="):
        return (a == b) == (op == "=")
    else:
        raise _EvalError("ordering of non-numeric terms")
    return {"=": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _truth(v) -> bool:
    if isinstance(v, bool):
        return v
    n = _number(v)
    if n is not None:
        return n != 0
    raise _EvalError("not a boolean")


class _Store:
    def __init__(self, graph: KnowledgeGraph):
        self.by_p: dict = {}
        self.by_ps: dict = {}
        self.by_po: dict = {}
        for s, p, o in graph.all_triples():
            st, pt, ot = _node_term(s), ("iri", NS + p), _node_term(o)
            self.by_p.setdefault(pt, []).append((st, ot))
            self.by_ps.setdefault((pt, st), []).append(ot)
            self.by_po.setdefault((pt, ot), []).append(st)

    def match(self, s, p, o):
        if s is not None and o is not None:
            return [(s, o)] if o in self.by_ps.get((p, s), ()) else []
        if s is not None:
            return [(s, x) for x in self.by_ps.get((p, s), ())]
        if o is not None:
            return [(x, o) for x in self.by_po.get((p, o), ())]
        return self.by_p.get(p, [])


_stores: "weakref.WeakKeyDictionary[KnowledgeGraph, _Store]" = weakref.WeakKeyDictionary()


def _store(graph: KnowledgeGraph) -> _Store:
    st = _stores.get(graph)
    if st is None:
        st = _stores[graph] = _Store(graph)
    return st


def _node_term(node):
    if isinstance(node, LiteralAtom):
        return ("lit", node.value, node.datatype)
    return ("iri", NS + node)


def _term_node(t):
    if t[0] == "lit":
        return LiteralAtom(t[1], t[2])
    iri = t[1]
    return iri[len(NS):] if iri.startswith(NS) else iri


def _compatible_join(rows: list[dict], others: list[dict]) -> list[dict]:
    out = []
    for r in rows:
        for o in others:
            if all(r[k] == v for k, v in o.items() if k in r):
                out.append({**r, **o})
    return out


def _run_group(items: list, store: _Store) -> list[dict]:
    rows: list[dict] = [{}]
    filters = []
    for it in items:
        if isinstance(it, _Filter):
            filters.append(it.expr)
        elif isinstance(it, _Values):
            rows = _compatible_join(rows, [{it.var: t} for t in it.terms])
        elif isinstance(it, _Sub):
            rows = _compatible_join(rows, _run_select(it.query, store))
        else:
            rows = _match_triple(it, rows, store)
        if not rows:
            return []
    kept = []
    for r in rows:
        try:
            if all(_truth(_eval_filter(f, r)) for f in filters):
                kept.append(r)
        except _EvalError:
            pass
    return kept


def _match_triple(t: _Triple, rows: list[dict], store: _Store) -> list[dict]:
    if isinstance(t.p, str):
        raise QueryParseError("variable predicates are not supported")
    out = []
    for r in rows:
        s = r.get(t.s) if isinstance(t.s, str) else t.s
        o = r.get(t.o) if isinstance(t.o, str) else t.o
        for ms, mo in store.match(s, t.p, o):
            new = dict(r)
            if isinstance(t.s, str):
                new[t.s] = ms
            if isinstance(t.o, str):
                if t.o in new and new[t.o] != mo:
                    continue
                new[t.o] = mo
            out.append(new)
    return out


def _run_select(q: _Query, store: _Store) -> list[dict]:
    rows = _run_group(q.where, store)
    if any(p.agg for p in q.projections):
        if not all(p.agg for p in q.projections):
            raise QueryParseError("mixing aggregates and plain variables needs GROUP BY")
        result = {}
        for p in q.projections:
            vals = [r[p.arg] for r in rows if p.arg in r]
            if p.distinct:
                vals = list(dict.fromkeys(vals))
            if p.agg == "COUNT":
                result[p.var] = ("lit", str(len(vals)), XSD_NS + "integer")
            else:
                nums = [(n, v) for v in vals if (n := _number(v)) is not None]
                if nums:
                    pick = max if p.agg == "MAX" else min
                    result[p.var] = pick(nums, key=lambda nv: nv[0])[1]
        return [result]
    out = [{p.var: r[p.var] for p in q.projections if p.var in r} for r in rows]
    if q.distinct:
        seen, uniq = set(), []
        for r in out:
            key = tuple(sorted(r.items()))
            if key not in seen:
                seen.add(key)
                uniq.append(r)
        out = uniq
    return out


def execute_sparql(query: str, graph: KnowledgeGraph) -> Denotation:
    """Run ``query`` against ``graph`` and package the result as a denotation.

    One projected variable gives an entity set, two give a pair set and a
    single ``COUNT`` aggregate gives an integer.
    """
    q = _Parser(query).parse()
    rows = _run_select(q, _store(graph))
    projs = q.projections
    if len(projs) == 1 and projs[0].agg == "COUNT":
        return Denotation.count(int(rows[0][projs[0].var][1]))
    if len(projs) == 1:
        v = projs[0].var
        return Denotation.unary(_term_node(r[v]) for r in rows if v in r)
    if len(projs) == 2:
        a, b = projs[0].var, projs[1].var
        return Denotation.binary((_term_node(r[a]), _term_node(r[b])) for r in rows if a in r and b in r)
    raise QueryParseError("expected one or two projected variables")
