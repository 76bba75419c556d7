"""S-expression logical forms: AST, parser, printer, reference splicing and
canonical comparison.

Grammar::

    expr    := atom | "(" OP expr+ ")"
    OP      := AND | COUNT | R | JOIN | ARGMAX | ARGMIN | LT | LE | GT | GE
    atom    := entity | literal | ref | name
    entity  := ("m." | "g.") [0-9a-z_]+
    literal := lexical "^^" datatype-iri
    ref     := "s-exp-" INT ["." INT]

Whether a bare ``name`` is a class or a relation is decided by its position
when the operator fixes it (``R`` takes a relation, ``AND`` takes classes) and
otherwise deferred to :func:`bind`, which consults a schema.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from decimal import Decimal, InvalidOperation
from typing import Callable, ClassVar, Iterator, Mapping, Protocol

from .errors import (
    ArityError,
    CyclicRef,
    SExprSyntaxError,
    TypeMismatch,
    UnboundAtom,
    UnboundRef,
)

ENTITY_RE = re.compile(r"^[mg]\.[0-9A-Za-z_]+$")
REF_RE = re.compile(r"^s-exp-(\d+)(?:\.(\d+))?$")

XSD = "http://www.w3.org/2001/XMLSchema#"
_NUMERIC_LOCAL = {
    "float", "double", "decimal", "integer", "int", "long", "short", "byte",
    "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
    "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte",
}


def datatype_local_name(datatype: str) -> str:
    for prefix in (XSD, "xsd:", "type."):
        if datatype.startswith(prefix):
            return datatype[len(prefix):]
    return datatype


def is_numeric_datatype(datatype: str) -> bool:
    return datatype_local_name(datatype) in _NUMERIC_LOCAL


class SchemaLike(Protocol):
    def has_class(self, name: str) -> bool: ...
    def has_relation(self, name: str) -> bool: ...


# -- AST ----------------------------------------------------------------------

class SExpr:
    __slots__ = ()
    kind: ClassVar[str] = "SExpr"

    def children(self) -> tuple["SExpr", ...]:
        return tuple(getattr(self, f.name) for f in fields(self) if isinstance(getattr(self, f.name), SExpr))

    def __str__(self) -> str:
        return print_sexpr(self)


class AtomBase(SExpr):
    __slots__ = ()

    def children(self) -> tuple[SExpr, ...]:
        return ()


@dataclass(frozen=True, slots=True)
class EntityAtom(AtomBase):
    id: str
    kind: ClassVar[str] = "EntityAtom"


@dataclass(frozen=True, slots=True)
class ClassAtom(AtomBase):
    name: str
    kind: ClassVar[str] = "ClassAtom"


@dataclass(frozen=True, slots=True)
class RelationAtom(AtomBase):
    name: str
    kind: ClassVar[str] = "RelationAtom"


@dataclass(frozen=True, slots=True)
class Atom(AtomBase):
    """A name whose class/relation role is not fixed yet."""

    name: str
    kind: ClassVar[str] = "Atom"


@dataclass(frozen=True, slots=True)
class LiteralAtom(AtomBase):
    value: str
    datatype: str
    kind: ClassVar[str] = "LiteralAtom"

    def __post_init__(self):
        if self.datatype.startswith("xsd:"):
            object.__setattr__(self, "datatype", XSD + self.datatype[4:])

    @property
    def is_numeric(self) -> bool:
        return is_numeric_datatype(self.datatype)

    def number(self) -> Decimal:
        try:
            return Decimal(self.value)
        except InvalidOperation:
            raise TypeMismatch(f"literal {self.value!r} is not numeric") from None


@dataclass(frozen=True, slots=True)
class Ref(AtomBase):
    id: str
    kind: ClassVar[str] = "Ref"

    @property
    def task(self) -> int:
        return int(REF_RE.match(self.id).group(1))

    @property
    def step(self) -> int | None:
        s = REF_RE.match(self.id).group(2)
        return int(s) if s else None


@dataclass(frozen=True, slots=True)
class And(SExpr):
    left: SExpr
    right: SExpr
    kind: ClassVar[str] = "And"


@dataclass(frozen=True, slots=True)
class Count(SExpr):
    arg: SExpr
    kind: ClassVar[str] = "Count"


@dataclass(frozen=True, slots=True)
class Reverse(SExpr):
    arg: SExpr
    kind: ClassVar[str] = "Reverse"


@dataclass(frozen=True, slots=True)
class Join(SExpr):
    """``(JOIN path arg)``: projection through ``path`` when ``arg`` is unary,
    relation composition when ``arg`` is binary."""

    path: SExpr
    arg: SExpr
    kind: ClassVar[str] = "Join"


@dataclass(frozen=True, slots=True)
class Superlative(SExpr):
    arg: SExpr
    attribute: SExpr
    kind: ClassVar[str] = "Superlative"
    op: ClassVar[str] = ""


@dataclass(frozen=True, slots=True)
class ArgMax(Superlative):
    kind: ClassVar[str] = "ArgMax"
    op: ClassVar[str] = "ARGMAX"


@dataclass(frozen=True, slots=True)
class ArgMin(Superlative):
    kind: ClassVar[str] = "ArgMin"
    op: ClassVar[str] = "ARGMIN"


@dataclass(frozen=True, slots=True)
class Comparison(SExpr):
    attribute: SExpr
    value: LiteralAtom
    kind: ClassVar[str] = "Comparison"
    op: ClassVar[str] = ""


@dataclass(frozen=True, slots=True)
class Lt(Comparison):
    kind: ClassVar[str] = "Lt"
    op: ClassVar[str] = "LT"


@dataclass(frozen=True, slots=True)
class Le(Comparison):
    kind: ClassVar[str] = "Le"
    op: ClassVar[str] = "LE"


@dataclass(frozen=True, slots=True)
class Gt(Comparison):
    kind: ClassVar[str] = "Gt"
    op: ClassVar[str] = "GT"


@dataclass(frozen=True, slots=True)
class Ge(Comparison):
    kind: ClassVar[str] = "Ge"
    op: ClassVar[str] = "GE"


COMPARISONS: dict[str, type[Comparison]] = {"LT": Lt, "LE": Le, "GT": Gt, "GE": Ge}
SUPERLATIVES: dict[str, type[Superlative]] = {"ARGMAX": ArgMax, "ARGMIN": ArgMin}

# operand roles per operator; "any" accepts a unary or a binary operand
_SIGNATURES: dict[str, tuple[str, ...]] = {
    "AND": ("unary", "unary"),
    "COUNT": ("unary",),
    "R": ("binary",),
    "JOIN": ("binary", "any"),
    "ARGMAX": ("unary", "binary"),
    "ARGMIN": ("unary", "binary"),
    "LT": ("binary", "literal"),
    "LE": ("binary", "literal"),
    "GT": ("binary", "literal"),
    "GE": ("binary", "literal"),
}


def _construct(op: str, args: list[SExpr]) -> SExpr:
    if op == "AND":
        return And(*args)
    if op == "COUNT":
        return Count(*args)
    if op == "R":
        return Reverse(*args)
    if op == "JOIN":
        return Join(*args)
    if op in SUPERLATIVES:
        return SUPERLATIVES[op](*args)
    return COMPARISONS[op](*args)


def operator_name(expr: SExpr) -> str | None:
    if isinstance(expr, And):
        return "AND"
    if isinstance(expr, Count):
        return "COUNT"
    if isinstance(expr, Reverse):
        return "R"
    if isinstance(expr, Join):
        return "JOIN"
    if isinstance(expr, (Superlative, Comparison)):
        return expr.op
    return None


def value_type(expr: SExpr) -> str:
    """Static denotation type: ``unary``, ``binary``, ``count`` or ``unknown``."""
    if isinstance(expr, (EntityAtom, ClassAtom, LiteralAtom, And, Superlative, Comparison)):
        return "unary"
    if isinstance(expr, (RelationAtom, Reverse)):
        return "binary"
    if isinstance(expr, Count):
        return "count"
    if isinstance(expr, Join):
        inner = value_type(expr.arg)
        return inner if inner in ("unary", "binary") else "unknown"
    return "unknown"


def _check_operand(op: str, role: str, child: SExpr, position: int | None) -> None:
    t = value_type(child)
    where = f" at position {position}" if position is not None else ""
    if role == "literal":
        if not isinstance(child, LiteralAtom):
            raise TypeMismatch(f"{op} expects a literal as its second operand{where}")
        if not child.is_numeric:
            raise TypeMismatch(f"{op} needs a numeric literal, got datatype {child.datatype}{where}")
        return
    if t == "count":
        raise TypeMismatch(f"{op} cannot take a COUNT result as operand{where}")
    if role == "unary" and t == "binary":
        raise TypeMismatch(f"{op} expects an entity set, got a binary expression {child}{where}")
    if role == "binary" and t == "unary":
        raise TypeMismatch(f"{op} expects a binary expression, got {child}{where}")


def check_types(expr: SExpr) -> None:
    """Raise :class:`TypeMismatch` if any operator has an ill-typed operand."""
    op = operator_name(expr)
    if op is None:
        return
    for role, child in zip(_SIGNATURES[op], expr.children()):
        check_types(child)
        _check_operand(op, role, child, None)


# -- printing -----------------------------------------------------------------

def _print_literal(lit: LiteralAtom) -> str:
    value = lit.value
    if not value or re.search(r'[\s()"]', value):
        value = '"' + value.replace('"', '\\"') + '"'
    return f"{value}^^{lit.datatype}"


def print_sexpr(expr: SExpr) -> str:
    if isinstance(expr, EntityAtom):
        return expr.id
    if isinstance(expr, (ClassAtom, RelationAtom, Atom)):
        return expr.name
    if isinstance(expr, Ref):
        return expr.id
    if isinstance(expr, LiteralAtom):
        return _print_literal(expr)
    op = operator_name(expr)
    if op is None:
        raise TypeError(f"not an s-expression node: {expr!r}")
    return "(" + " ".join([op] + [print_sexpr(c) for c in expr.children()]) + ")"


# -- parsing ------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # "(" | ")" | "atom"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append(_Token(c, c, i))
            i += 1
        else:
            start = i
            if c == '"':
                i += 1
                while i < n and text[i] != '"':
                    i += 2 if text[i] == "\\" else 1
                if i >= n:
                    raise SExprSyntaxError("unterminated string literal", start, '"')
                i += 1
            while i < n and not text[i].isspace() and text[i] not in "()":
                i += 1
            tokens.append(_Token("atom", text[start:i], start))
    return tokens


def _atom(token: _Token, role: str) -> SExpr:
    text = token.text
    if "^^" in text:
        value, _, datatype = text.rpartition("^^")
        if not datatype:
            raise SExprSyntaxError("literal without datatype", token.pos, "datatype IRI")
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1].replace('\\"', '"')
        lit = LiteralAtom(value, datatype)
        if role == "binary":
            raise TypeMismatch(f"literal {text} used where a relation is expected at position {token.pos}")
        return lit
    if text.startswith('"'):
        raise SExprSyntaxError("string literal without datatype", token.pos, "^^datatype")
    if REF_RE.match(text):
        return Ref(text)
    if text.upper() in _SIGNATURES and text.upper() == text:
        raise SExprSyntaxError(f"operator {text} outside parentheses", token.pos, "'('")
    if ENTITY_RE.match(text):
        if role == "binary":
            raise TypeMismatch(f"entity {text} used where a relation is expected at position {token.pos}")
        return EntityAtom(text)
    if role == "binary":
        return RelationAtom(text)
    if role == "unary":
        return ClassAtom(text)
    return Atom(text)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def expr(self, role: str) -> SExpr:
        tok = self.peek()
        if tok is None:
            raise SExprSyntaxError("unexpected end of input", len(self.text), "expression")
        if tok.kind == ")":
            raise SExprSyntaxError("unexpected ')'", tok.pos, "expression")
        self.i += 1
        if tok.kind == "atom":
            return _atom(tok, role)
        op_tok = self.peek()
        if op_tok is None:
            raise SExprSyntaxError("unexpected end of input", len(self.text), "operator")
        if op_tok.kind != "atom" or op_tok.text not in _SIGNATURES:
            raise SExprSyntaxError(f"unknown operator {op_tok.text!r}", op_tok.pos,
                                   "one of " + ", ".join(_SIGNATURES))
        self.i += 1
        op = op_tok.text
        roles = _SIGNATURES[op]
        args: list[SExpr] = []
        positions: list[int] = []
        while True:
            nxt = self.peek()
            if nxt is None:
                raise SExprSyntaxError("unexpected end of input", len(self.text), "')'")
            if nxt.kind == ")":
                self.i += 1
                break
            role = roles[len(args)] if len(args) < len(roles) else "any"
            positions.append(nxt.pos)
            args.append(self.expr(role))
        if len(args) != len(roles):
            raise ArityError(op, len(roles), len(args))
        for role, child, pos in zip(roles, args, positions):
            _check_operand(op, role, child, pos)
        return _construct(op, args)

    def parse(self) -> SExpr:
        if not self.tokens:
            raise SExprSyntaxError("empty input", 0, "expression")
        out = self.expr("top")
        extra = self.peek()
        if extra is not None:
            raise SExprSyntaxError(f"trailing input {extra.text!r}", extra.pos, "end of input")
        return out


def parse_sexpr(text: str, schema: SchemaLike | None = None) -> SExpr:
    """Parse ``text``; when ``schema`` is given the result is also bound."""
    expr = _Parser(text).parse()
    return bind(expr, schema) if schema is not None else expr


# -- traversal helpers --------------------------------------------------------

def rebuild(expr: SExpr, fn: Callable[[SExpr], SExpr]) -> SExpr:
    """Return ``expr`` with ``fn`` applied to each direct child."""
    children = expr.children()
    if not children:
        return expr
    return type(expr)(*[fn(c) for c in children])


def walk(expr: SExpr) -> Iterator[SExpr]:
    """Pre-order iteration over every node."""
    yield expr
    for child in expr.children():
        yield from walk(child)


def refs_in(expr: SExpr) -> list[str]:
    seen: dict[str, None] = {}
    for node in walk(expr):
        if isinstance(node, Ref):
            seen.setdefault(node.id)
    return list(seen)


def relations_in(expr: SExpr) -> list[str]:
    seen: dict[str, None] = {}
    for node in walk(expr):
        if isinstance(node, RelationAtom):
            seen.setdefault(node.name)
    return list(seen)


def schema_items(expr: SExpr) -> set[str]:
    """Names of all relations and classes (bound or not) in ``expr``."""
    return {node.name for node in walk(expr) if isinstance(node, (ClassAtom, RelationAtom, Atom))}


def bind(expr: SExpr, schema: SchemaLike) -> SExpr:
    """Resolve every :class:`Atom` and check that classes and relations exist.

    Lookup order for an undetermined name: entity-id pattern, class, relation.
    """

    def go(node: SExpr) -> SExpr:
        if isinstance(node, Atom):
            if ENTITY_RE.match(node.name):
                return EntityAtom(node.name)
            if schema.has_class(node.name):
                return ClassAtom(node.name)
            if schema.has_relation(node.name):
                return RelationAtom(node.name)
            raise UnboundAtom(node.name)
        if isinstance(node, ClassAtom) and not schema.has_class(node.name):
            raise UnboundAtom(node.name)
        if isinstance(node, RelationAtom) and not schema.has_relation(node.name):
            raise UnboundAtom(node.name)
        return rebuild(node, go)

    bound = go(expr)
    check_types(bound)
    return bound


def is_bound(expr: SExpr) -> bool:
    return not any(isinstance(n, Atom) for n in walk(expr))


# -- reference splicing -------------------------------------------------------

def substitute_refs(expr: SExpr, bindings: Mapping[str, SExpr]) -> SExpr:
    """Splice bound expressions in place of every :class:`Ref`.

    Bindings may themselves mention other refs; they are expanded recursively.
    """
    done: dict[str, SExpr] = {}

    def resolve(ref_id: str, stack: tuple[str, ...]) -> SExpr:
        if ref_id in stack:
            raise CyclicRef(list(stack[stack.index(ref_id):]) + [ref_id])
        if ref_id in done:
            return done[ref_id]
        if ref_id not in bindings:
            raise UnboundRef(ref_id)
        out = go(bindings[ref_id], stack + (ref_id,))
        done[ref_id] = out
        return out

    def go(node: SExpr, stack: tuple[str, ...]) -> SExpr:
        if isinstance(node, Ref):
            return resolve(node.id, stack)
        return rebuild(node, lambda c: go(c, stack))

    return go(expr, ())


# -- canonical form -----------------------------------------------------------

def _reverse(b: SExpr) -> SExpr:
    if isinstance(b, Reverse):
        return b.arg
    if isinstance(b, Join) and value_type(b.arg) != "unary":
        # R(b1 . b2) = R(b2) . R(b1)
        return Join(_reverse(b.arg), _reverse(b.path))
    return Reverse(b)


def canonicalize(expr: SExpr) -> SExpr:
    """Sort AND operands, drop double reversals, push R down to atoms."""
    if isinstance(expr, Reverse):
        return _reverse(canonicalize(expr.arg))
    if isinstance(expr, And):
        left, right = canonicalize(expr.left), canonicalize(expr.right)
        if print_sexpr(right) < print_sexpr(left):
            left, right = right, left
        return And(left, right)
    return rebuild(expr, canonicalize)


def semantic_equal(a: SExpr, b: SExpr) -> bool:
    return print_sexpr(canonicalize(a)) == print_sexpr(canonicalize(b))
