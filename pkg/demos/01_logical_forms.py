"""
Logical forms on a small Freebase slice
=======================================

Parse an s-expression, evaluate it against the in-memory graph, compile it
to SPARQL, and split it into the subtasks an agent would solve one by one.

Run with ``python demos/01_logical_forms.py``.
"""

from importlib import resources
from pathlib import Path

from dara.decompose import decompose_by_ops, reassemble
from dara.kg.evaluate import evaluate
from dara.kg.graph import load_graph
from dara.kg.sparql import compile_sparql
from dara.kg.sparql_engine import execute_sparql
from dara.sexpr import bind, parse_sexpr, print_sexpr, semantic_equal

fixtures = Path(str(resources.files("dara"))) / "fixtures" / "freebase_slice"
graph = load_graph(fixtures / "triples.tsv", fixtures / "schema.json")
print("graph:", graph.stats())

# %%
# A one-hop question. Parsing leaves atoms untyped; binding against the
# schema decides which names are entities, classes and relations.
ronny = bind(parse_sexpr("(JOIN (R olympics.olympic_mascot.olympic_games) m.04dwjbg)"), graph.schema)
print(print_sexpr(ronny), "->", sorted(evaluate(ronny, graph).answers()))

# %%
# Counting, and the same query as SPARQL. The bundled SPARQL engine runs
# the compiled query over the same triples, so both routes can be compared.
snk = bind(parse_sexpr(
    "(COUNT (AND cvg.computer_game_compilation (JOIN (R cvg.cvg_developer.games_developed) m.0fx_snk)))"),
    graph.schema)
query = compile_sparql(snk, graph.schema)
print(query)
print("direct:", evaluate(snk, graph).value, " via SPARQL:", execute_sparql(query, graph).value)

# %%
# A comparison with a typed literal. Values compare as decimals, so
# 980.0 and 980 are the same threshold.
rocket = bind(parse_sexpr(
    "(AND (JOIN (R spaceflight.rocket_engine_cycle.rocket_engines) m.0fx_cyc1) "
    "(AND (JOIN (R spaceflight.rocket_engine_fuel.rocket_engines) m.017q1y) "
    "(LT spaceflight.rocket_engine.dry_mass 980.0^^http://www.w3.org/2001/XMLSchema#float)))"), graph.schema)
print("light engines:", sorted(evaluate(rocket, graph).answers()))

# %%
# Decomposition: every AND, COUNT, superlative or comparison starts a new
# subtask, while a hop through a mediator node stays inside one subtask as
# an extra step.
for task in decompose_by_ops(rocket, graph.schema):
    print(f"task {task.index}:", " | ".join(print_sexpr(s) for s in task.steps))
print("reassembles to the same form:", semantic_equal(reassemble(decompose_by_ops(rocket, graph.schema)), rocket))

# %%
# Equivalence ignores AND operand order and double reversal.
a = parse_sexpr("(AND cvg.computer_game_compilation (JOIN (R (R (R cvg.cvg_developer.games_developed))) m.0fx_snk))")
b = parse_sexpr("(AND (JOIN (R cvg.cvg_developer.games_developed) m.0fx_snk) cvg.computer_game_compilation)")
print("equivalent:", semantic_equal(a, b))
