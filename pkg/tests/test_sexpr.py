import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from dara.decompose import check_subtasks, decompose_by_ops, reassemble, subtask_bindings
from dara.errors import ArityError, CyclicRef, SExprSyntaxError, TypeMismatch, UnboundAtom, UnboundRef
from dara.kg.evaluate import evaluate
from dara.sexpr import (
    XSD, And, ArgMax, ArgMin, Atom, ClassAtom, Count, EntityAtom, Ge, Gt, Join, Le, LiteralAtom, Lt,
    Ref, RelationAtom, Reverse, bind, canonicalize, parse_sexpr, print_sexpr, semantic_equal,
    substitute_refs,
)
from dara.synth import ExprGenerator, random_cases, random_graph

RONNY = "(JOIN (R olympics.olympic_mascot.olympic_games) m.04dwjbg)"
ROCKET_LT = "(LT spaceflight.rocket_engine.dry_mass 980.0^^http://www.w3.org/2001/XMLSchema#float)"


# -- parsing and printing ------------------------------------------------------

def test_parse_ronny_form():
    e = parse_sexpr(RONNY)
    assert e == Join(Reverse(RelationAtom("olympics.olympic_mascot.olympic_games")), EntityAtom("m.04dwjbg"))


def test_parse_single_entity():
    assert parse_sexpr("m.017q1y") == EntityAtom("m.017q1y")


def test_parse_comparison_literal():
    e = parse_sexpr(ROCKET_LT)
    assert e == Lt(RelationAtom("spaceflight.rocket_engine.dry_mass"), LiteralAtom("980.0", XSD + "float"))


def test_print_examples():
    assert print_sexpr(Join(Reverse(RelationAtom("r")), EntityAtom("m.x"))) == "(JOIN (R r) m.x)"
    assert print_sexpr(Count(ClassAtom("c"))) == "(COUNT c)"
    assert print_sexpr(parse_sexpr(RONNY)) == RONNY


def test_print_normalises_whitespace():
    assert print_sexpr(parse_sexpr("(  JOIN\n(R   r)   m.x )")) == "(JOIN (R r) m.x)"


def test_refs_parse():
    assert parse_sexpr("(AND s-exp-1 s-exp-2.3)") == And(Ref("s-exp-1"), Ref("s-exp-2.3"))
    assert Ref("s-exp-2.3").task == 2 and Ref("s-exp-2.3").step == 3


@pytest.mark.parametrize("text, pos", [("(JOIN (R r) m.x", 15), (")", 0), ("(FOO a b)", 1), ("", 0)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(SExprSyntaxError) as info:
        parse_sexpr(text)
    assert info.value.position == pos


@pytest.mark.parametrize("text", ["(AND a)", "(COUNT a b)", "(JOIN a)", "(R a b)", "(ARGMAX a)"])
def test_arity_errors(text):
    with pytest.raises(ArityError):
        parse_sexpr(text)


@pytest.mark.parametrize("text", ["(COUNT (R r))", "(LT r abc)", "(R m.x)", "(LT r 1^^http://www.w3.org/2001/XMLSchema#string)"])
def test_type_errors(text):
    with pytest.raises(TypeMismatch):
        parse_sexpr(text)


def test_bind_resolves_atoms(graph):
    e = bind(parse_sexpr("(AND cvg.computer_game_compilation (JOIN (R cvg.cvg_developer.games_developed) m.0fx_snk))"),
             graph.schema)
    assert isinstance(e.left, ClassAtom)
    assert isinstance(e.right.path.arg, RelationAtom)


def test_bind_unknown_atom(graph):
    with pytest.raises(UnboundAtom):
        bind(parse_sexpr("(JOIN no.such.relation m.04dwjbg)"), graph.schema)


# -- references ----------------------------------------------------------------

def test_substitute_refs_manado():
    bindings = {
        "s-exp-1": parse_sexpr("(JOIN food.dish.ingredients m.06x4c)"),
        "s-exp-2": parse_sexpr("(JOIN (R dining.cuisine.dishes) m.0102k5v9)"),
        "s-exp-3": parse_sexpr("(AND s-exp-1 s-exp-2)"),
    }
    out = substitute_refs(parse_sexpr("(JOIN food.type_of_dish.dishes s-exp-3)"), bindings)
    assert print_sexpr(out) == ("(JOIN food.type_of_dish.dishes (AND (JOIN food.dish.ingredients m.06x4c) "
                                "(JOIN (R dining.cuisine.dishes) m.0102k5v9)))")


def test_substitute_refs_identity():
    e = parse_sexpr(RONNY)
    assert substitute_refs(e, {}) == e


def test_substitute_refs_cycle():
    with pytest.raises(CyclicRef):
        substitute_refs(Ref("s-exp-1"), {"s-exp-1": Ref("s-exp-1")})
    with pytest.raises(CyclicRef):
        substitute_refs(Ref("s-exp-1"), {"s-exp-1": Ref("s-exp-2"), "s-exp-2": Ref("s-exp-1")})


def test_substitute_refs_unbound():
    with pytest.raises(UnboundRef):
        substitute_refs(parse_sexpr("(AND s-exp-1 c)"), {})


# -- semantic equality ---------------------------------------------------------

def test_semantic_equal_examples():
    assert semantic_equal(parse_sexpr("(AND x y)"), parse_sexpr("(AND y x)"))
    assert semantic_equal(Reverse(Reverse(RelationAtom("r"))), RelationAtom("r"))
    assert not semantic_equal(parse_sexpr("(JOIN r1 m.e)"), parse_sexpr("(JOIN r2 m.e)"))


def test_reverse_pushed_to_atoms():
    e = Reverse(Join(RelationAtom("a"), RelationAtom("b")))
    assert print_sexpr(canonicalize(e)) == "(JOIN (R b) (R a))"


def test_reverse_of_unbound_composition():
    bound = Reverse(Join(RelationAtom("rel.r0"), RelationAtom("rel.r2")))
    unbound = parse_sexpr("(R (JOIN rel.r0 rel.r2))")
    assert semantic_equal(bound, unbound)
    assert print_sexpr(canonicalize(unbound)) == "(JOIN (R rel.r2) (R rel.r0))"


# -- decomposition ---------------------------------------------------------------

def _lines(subtasks):
    return [[print_sexpr(s) for s in t.steps] for t in subtasks]


def test_decompose_manado(dataset, graph):
    tasks = decompose_by_ops(dataset["manado"].gold_sexpr, graph.schema)
    assert _lines(tasks) == [
        ["(JOIN food.dish.ingredients m.06x4c)"],
        ["(JOIN (R dining.cuisine.dishes) m.0102k5v9)"],
        ["(AND s-exp-1 s-exp-2)"],
        ["(JOIN food.type_of_dish.dishes s-exp-3)"],
    ]


def test_decompose_rocket(dataset, graph):
    tasks = decompose_by_ops(dataset["rocket"].gold_sexpr, graph.schema)
    assert len(tasks) == 3
    assert print_sexpr(tasks[-1].steps[0]) == "(AND s-exp-1 s-exp-2)"


def test_decompose_cvt_keeps_one_subtask(dataset, graph):
    tasks = decompose_by_ops(dataset["gh3"].gold_sexpr, graph.schema)
    assert len(tasks) == 1 and len(tasks[0].steps) == 2
    assert print_sexpr(tasks[0].steps[1]) == "(JOIN (R cvg.musical_game_song_relationship.song) s-exp-1.1)"


def test_decompose_non_cvt_chain_splits(dataset, graph):
    tasks = decompose_by_ops(dataset["petdisease"].gold_sexpr, graph.schema)
    assert len(tasks) == 2


def test_decompose_atom_is_one_task(graph):
    tasks = decompose_by_ops(parse_sexpr("m.04dwjbg"), graph.schema)
    assert len(tasks) == 1 and tasks[0].steps == [EntityAtom("m.04dwjbg")]


@pytest.mark.parametrize("qid", ["ronny", "comet", "snk", "manado", "rocket", "gh3", "petdisease"])
def test_reassemble_fixture_forms(qid, dataset, graph):
    gold = dataset[qid].gold_sexpr
    tasks = decompose_by_ops(gold, graph.schema)
    assert check_subtasks(tasks) == []
    assert semantic_equal(reassemble(tasks), gold)


def test_subtask_bindings_last_step(dataset, graph):
    tasks = decompose_by_ops(dataset["gh3"].gold_sexpr, graph.schema)
    b = subtask_bindings(tasks)
    assert b["s-exp-1"] == b["s-exp-1.2"]


# -- corpus ----------------------------------------------------------------------

def corpus_lines():
    text = (FIXTURES / "corpus" / "sexprs.txt").read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def test_corpus_size():
    assert len(corpus_lines()) >= 200


def test_corpus_round_trip():
    for line in corpus_lines():
        e = parse_sexpr(line)
        assert print_sexpr(e) == line
        assert parse_sexpr(print_sexpr(e)) == e


def test_semantic_equal_is_equivalence_on_corpus():
    exprs = [parse_sexpr(x) for x in corpus_lines()]
    keys = [print_sexpr(canonicalize(e)) for e in exprs]
    sample = random.Random(3).sample(range(len(exprs)), 60)
    for i in sample:
        assert semantic_equal(exprs[i], exprs[i])
        for j in sample:
            assert semantic_equal(exprs[i], exprs[j]) == semantic_equal(exprs[j], exprs[i])
            assert semantic_equal(exprs[i], exprs[j]) == (keys[i] == keys[j])


# -- properties --------------------------------------------------------------------

# schema names never look like entity ids (m.* or g.*)
names = st.from_regex(r"[a-fh-ln-z][a-z]{0,3}\.[a-z_]{1,6}", fullmatch=True)
mids = st.from_regex(r"m\.[0-9a-z_]{1,6}", fullmatch=True)
literals = st.builds(
    lambda v, t: LiteralAtom(str(v) if t == "integer" else f"{v}.5", XSD + t),
    st.integers(-50, 50), st.sampled_from(["integer", "float", "double"]),
)
binaries = st.recursive(
    names.map(RelationAtom),
    lambda inner: st.one_of(st.builds(Reverse, inner), st.builds(Join, inner, inner)),
    max_leaves=4,
)
unaries = st.recursive(
    st.one_of(mids.map(EntityAtom), names.map(ClassAtom),
              st.builds(lambda r, lit, op: op(RelationAtom(r), lit), names, literals, st.sampled_from([Lt, Le, Gt, Ge]))),
    lambda inner: st.one_of(
        st.builds(And, inner, inner),
        st.builds(Join, binaries, inner),
        st.builds(ArgMax, inner, names.map(RelationAtom)),
        st.builds(ArgMin, inner, names.map(RelationAtom)),
    ),
    max_leaves=6,
)
expressions = st.one_of(unaries, unaries.map(Count), binaries)


def _unbind(e):
    """Parsing without a schema cannot tell classes from relations in some positions."""
    if isinstance(e, (ClassAtom, RelationAtom)):
        return Atom(e.name)
    if isinstance(e, (EntityAtom, LiteralAtom, Ref, Atom)):
        return e
    return type(e)(*[_unbind(c) for c in e.children()])


@given(expressions)
def test_print_parse_round_trip(e):
    text = print_sexpr(e)
    again = parse_sexpr(text)
    assert print_sexpr(again) == text
    assert _unbind(again) == _unbind(e)


@given(expressions, expressions)
def test_semantic_equal_symmetric(a, b):
    assert semantic_equal(a, b) == semantic_equal(b, a)


@given(expressions)
def test_canonicalize_idempotent(e):
    once = canonicalize(e)
    assert canonicalize(once) == once


@given(unaries, unaries)
def test_and_commutes(a, b):
    assert semantic_equal(And(a, b), And(b, a))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_semantic_equal_implies_same_denotation(seed):
    rng = random.Random(seed)
    g = random_graph(rng, n_entities=20)
    gen = ExprGenerator(g, rng)
    for _ in range(10):
        e = gen.expression(3)
        mirrored = canonicalize(e)
        assert semantic_equal(e, mirrored)
        assert evaluate(e, g) == evaluate(mirrored, g)


def test_reassembly_equivalence_500_random_forms():
    n = 0
    for g, e in random_cases(11, 500, depth=4):
        tasks = decompose_by_ops(e, g.schema)
        assert check_subtasks(tasks) == []
        assert evaluate(reassemble(tasks), g) == evaluate(e, g)
        n += 1
    assert n == 500
