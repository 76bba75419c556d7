import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, SCRIPTS
from dara.data import (
    CHECKS, FilterPolicy, build_decomposition_prompt, filter_training_pairs, make_candidate,
    parse_decomposition_prompt, task_lines, validate_trajectory, write_prompt_bundle, write_review_manifest,
)
from dara.decompose import decompose_by_ops
from dara.errors import MissingDescription
from dara.evaluation import DatasetItem
from dara.kg.graph import KnowledgeGraph
from dara.kg.schema import ClassInfo, RelationInfo, SchemaView
from dara.sexpr import parse_sexpr, print_sexpr

CORRUPTED = FIXTURES / "corrupted"


# -- filtering ---------------------------------------------------------------------

def test_filter_on_fixtures(dataset, graph):
    kept = filter_training_pairs(dataset.values(), graph.schema)
    assert [c.qid for c in kept] == ["manado", "petdisease", "rocket", "snk"]


def test_paraphrases_collapse(dataset, graph):
    twin = dataclasses.replace(dataset["manado"], qid="manado2", question="which dish type with sugar is from manado?")
    kept = filter_training_pairs([dataset["manado"], twin], graph.schema)
    assert [c.qid for c in kept] == ["manado"]
    # the reordered AND is the same logical form
    swapped = dataclasses.replace(dataset["manado"], qid="manado3", gold_sexpr=parse_sexpr(
        "(JOIN food.type_of_dish.dishes (AND (JOIN (R dining.cuisine.dishes) m.0102k5v9) "
        "(JOIN food.dish.ingredients m.06x4c)))"))
    assert len(filter_training_pairs([dataset["manado"], swapped], graph.schema)) == 1


def test_single_join_is_dropped_unless_allowed(dataset, graph):
    assert filter_training_pairs([dataset["ronny"]], graph.schema) == []
    loose = filter_training_pairs([dataset["ronny"]], graph.schema, FilterPolicy(require_complex=False))
    assert [c.qid for c in loose] == ["ronny"]


def _chain_schema():
    rels = [RelationInfo(f"t.r{i}", f"r{i}", "t.a", "t.a") for i in range(4)]
    return SchemaView(rels, [ClassInfo("t.a", "a")])


def _two_hop(qid, r1, r2, ent):
    return DatasetItem(qid, qid, parse_sexpr(f"(JOIN {r1} (JOIN {r2} {ent}))"))


def test_relation_cap():
    schema = _chain_schema()
    items = [_two_hop(f"q{n}", "t.r0", "t.r1", f"m.e{n}") for n in range(5)]
    items.append(_two_hop("z", "t.r2", "t.r3", "m.e9"))
    kept = filter_training_pairs(items, schema, FilterPolicy(max_per_relation=2))
    assert [c.qid for c in kept] == ["q0", "q1", "z"]


def test_candidate_fields(dataset, graph):
    cand = make_candidate(dataset["rocket"], graph.schema)
    assert cand.subtasks == 3
    assert "spaceflight.rocket_engine.dry_mass" in cand.relations


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["t.r0", "t.r1", "t.r2", "t.r3"]),
                          st.sampled_from(["t.r0", "t.r1", "t.r2", "t.r3"]),
                          st.integers(0, 4)), max_size=15),
       st.integers(1, 4))
def test_filter_idempotent_and_capped(specs, cap):
    schema = _chain_schema()
    items = [_two_hop(f"q{n:02d}", a, b, f"m.e{e}") for n, (a, b, e) in enumerate(specs)]
    policy = FilterPolicy(max_per_relation=cap)
    once = filter_training_pairs(items, schema, policy)
    twice = filter_training_pairs(once, schema, policy)
    assert [c.qid for c in once] == [c.qid for c in twice]
    assert len({c.key for c in once}) == len(once)
    for rel in ("t.r0", "t.r1", "t.r2", "t.r3"):
        assert sum(rel in c.relations for c in once) <= cap


# -- decomposition prompts ---------------------------------------------------------

def test_manado_prompt(dataset, graph):
    text = build_decomposition_prompt(dataset["manado"], graph)
    assert "Task 3: Step1:(AND task1 task2)" in text
    assert "Task 4: Step1:(JOIN food.type_of_dish.dishes task3)" in text
    assert "sugars (m.06x4c)" in text
    assert "1. the incoming relation 'food.dish.ingredients'" in text
    assert "2. the outgoing relation 'dining.cuisine.dishes'" in text
    assert "The type of its tail entity is 'food.dish'" in text


def test_gh3_prompt_has_two_steps(dataset, graph):
    text = build_decomposition_prompt(dataset["gh3"], graph)
    line = next(ln for ln in text.splitlines() if ln.startswith("Task 1:"))
    assert "Step1:" in line and "Step2:" in line


@pytest.mark.parametrize("qid", ["ronny", "comet", "snk", "manado", "rocket", "gh3", "petdisease"])
def test_prompt_parses_back_to_the_subtasks(qid, dataset, graph):
    subtasks = decompose_by_ops(dataset[qid].gold_sexpr, graph.schema)
    back = parse_decomposition_prompt(build_decomposition_prompt(dataset[qid], graph))
    assert [[print_sexpr(s) for s in t.steps] for t in back] == [[print_sexpr(s) for s in t.steps] for t in subtasks]
    assert task_lines(back) == task_lines(subtasks)


def test_missing_description_is_raised_and_skipped(tmp_path):
    rels = [RelationInfo("t.r", "", "t.a", "t.a")]
    g = KnowledgeGraph([], SchemaView(rels, [ClassInfo("t.a", "a")]))
    item = DatasetItem("x", "q", parse_sexpr("(JOIN t.r m.1)"))
    with pytest.raises(MissingDescription):
        build_decomposition_prompt(item, g)
    written, skipped = write_prompt_bundle([item], g, tmp_path)
    assert written == [] and list(skipped) == ["x"]


def test_prompt_bundle(tmp_path, dataset, graph):
    written, skipped = write_prompt_bundle(dataset.values(), graph, tmp_path)
    assert skipped == {}
    assert sorted(p.name for p in written) == sorted(f"{q}.prompt.txt" for q in dataset)


def test_prompt_is_byte_stable(dataset, graph):
    assert build_decomposition_prompt(dataset["rocket"], graph) == build_decomposition_prompt(dataset["rocket"], graph)


# -- trajectory validation -----------------------------------------------------------

SHIPPED = sorted((p.parent.name, p.stem) for p in SCRIPTS.glob("*/*.txt"))


@pytest.mark.parametrize("profile,qid", SHIPPED)
def test_shipped_traces_pass_all_checks(profile, qid, dataset, graph):
    report = validate_trajectory((SCRIPTS / profile / f"{qid}.txt").read_text(), dataset[qid], graph, profile)
    assert report.ok, report.findings


@pytest.mark.parametrize("check", list(CHECKS))
def test_each_corruption_fails_only_its_check(check, dataset, graph):
    text = (CORRUPTED / f"ronny_{check}.txt").read_text()
    report = validate_trajectory(text, dataset["ronny"], graph)
    assert report.failed_checks == [check], report.findings


def test_grammar_failure_points_at_the_line(dataset, graph):
    report = validate_trajectory((CORRUPTED / "ronny_a.txt").read_text(), dataset["ronny"], graph)
    finding = next(f for f in report.findings if f.check == "a")
    assert finding.line is not None and "Acton" in (CORRUPTED / "ronny_a.txt").read_text().splitlines()[finding.line - 1]


def test_empty_trace_fails(dataset, graph):
    report = validate_trajectory("", dataset["ronny"], graph)
    assert not report.ok and "d" in report.failed_checks


def test_review_manifest(tmp_path, dataset, graph):
    entries = []
    for name in ("ronny_a", "ronny_d"):
        text = (CORRUPTED / f"{name}.txt").read_text()
        entries.append((name, text, validate_trajectory(text, dataset["ronny"], graph, qid=name)))
    path = write_review_manifest(entries, tmp_path)
    doc = json.loads(path.read_text())
    assert [i["qid"] for i in doc["items"]] == ["ronny_a", "ronny_d"]
    assert doc["items"][1]["failed_checks"] == ["d"]
    checklist = (tmp_path / "ronny_d" / "checklist.md").read_text()
    assert "- [ ] (d)" in checklist and "- [x] (a)" in checklist
    assert (tmp_path / "ronny_a" / "trajectory.txt").read_text() == entries[0][1]
