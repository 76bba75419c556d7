import dataclasses
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, SLICE
from oracle import equivalent_variant
from dara.errors import DatasetError, UnknownQid
from dara.evaluation import (
    DatasetItem, EvalReport, Prediction, answer_f1, convert_grailqa, convert_webqsp, evaluate_run, exact_match,
    load_dataset, load_predictions, official_datasets, records_to_items, write_dataset, write_predictions,
    zero_shot_filter,
)
from dara.kg.evaluate import evaluate
from dara.sexpr import parse_sexpr, print_sexpr
from dara.synth import random_cases

MIXED = FIXTURES / "mixed_eval"


def f1_oracle(pred, gold):
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return Fraction(1)
    tp = len(pred & gold)
    if tp == 0:
        return Fraction(0)
    return Fraction(2 * tp, len(pred) + len(gold))


def test_f1_examples():
    assert answer_f1({"a", "b"}, {"b", "c"}) == 0.5
    assert answer_f1({"a"}, {"a"}) == 1.0
    assert answer_f1(set(), {"a"}) == 0.0
    assert answer_f1({"a"}, set()) == 0.0
    assert answer_f1(set(), set()) == 1.0
    assert answer_f1({"a", "b", "c"}, {"a"}) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(st.sets(st.integers(0, 12)), st.sets(st.integers(0, 12)))
def test_f1_matches_oracle_and_is_symmetric(p, g):
    assert answer_f1(p, g) == pytest.approx(float(f1_oracle(p, g)))
    assert answer_f1(p, g) == answer_f1(g, p)
    assert 0.0 <= answer_f1(p, g) <= 1.0


def _em_implies_f1(pairs, rng):
    checked = 0
    for g, e in pairs:
        gold = evaluate(e, g).answers()
        for pred in (e, equivalent_variant(e, rng), parse_sexpr(print_sexpr(e))):
            if exact_match(pred, e):
                assert answer_f1(evaluate(pred, g).answers(), gold) == 1.0, print_sexpr(e)
                checked += 1
    return checked


def test_em_implies_f1_on_random_corpus():
    rng = random.Random(7)
    assert _em_implies_f1(random_cases(20, 400, depth=4), rng) >= 1200


def test_em_implies_f1_on_fixture_forms(graph, dataset):
    rng = random.Random(3)
    assert _em_implies_f1([(graph, item.gold_sexpr) for item in dataset.values()], rng) == 21


def test_mixed_fixture_scores(graph):
    ds = load_dataset(MIXED / "dataset.jsonl", graph.schema)
    report = evaluate_run(load_predictions(MIXED / "predictions.jsonl"), ds, graph)
    assert report.overall == {"n": 4, "em": 50.0, "f1": 62.5}
    by_qid = {s.qid: s for s in report.items}
    assert by_qid["rocket"].f1 == 0.5 and not by_qid["rocket"].em
    assert by_qid["gh3"].outcome == "parse_failure"
    assert "em 50.0 f1 62.5" in report.table()


def test_all_gold_and_all_failed(graph, dataset):
    items = list(dataset.values())
    gold = [Prediction(i.qid, i.gold_sexpr) for i in items]
    assert evaluate_run(gold, items, graph).overall == {"n": 7, "em": 100.0, "f1": 100.0}
    assert evaluate_run([], items, graph).overall == {"n": 7, "em": 0.0, "f1": 0.0}
    failed = [Prediction(i.qid, None, outcome="budget_exhausted") for i in items]
    report = evaluate_run(failed, items, graph)
    assert {s.outcome for s in report.items} == {"budget_exhausted"}


def test_unknown_qid(graph, dataset):
    with pytest.raises(UnknownQid):
        evaluate_run([Prediction("nope", None)], list(dataset.values()), graph)


def test_unexecutable_prediction(graph, dataset):
    item = dataset["ronny"]
    report = evaluate_run([Prediction("ronny", parse_sexpr("(JOIN no.such.relation m.x)"))], [item], graph)
    assert report.items[0].outcome == "unexecutable" and report.items[0].f1 == 0.0


def test_gold_answers_take_precedence(graph, dataset):
    item = dataclasses.replace(dataset["ronny"], answers=frozenset({"m.other"}))
    report = evaluate_run([Prediction("ronny", item.gold_sexpr)], [item], graph)
    assert report.items[0].em and report.items[0].f1 == 0.0


def test_endpoint_style_kg(graph, dataset):
    class Client:
        schema = graph.schema

        def evaluate(self, expr):
            return evaluate(expr, graph)

    items = list(dataset.values())
    preds = [Prediction(i.qid, i.gold_sexpr) for i in items]
    assert evaluate_run(preds, items, Client()).overall["f1"] == 100.0


def test_report_json_is_deterministic(graph):
    ds = load_dataset(MIXED / "dataset.jsonl", graph.schema)
    preds = load_predictions(MIXED / "predictions.jsonl")
    a = evaluate_run(preds, ds, graph).to_json()
    b = evaluate_run(list(reversed(preds)), list(reversed(ds)), graph).to_json()
    assert a == b
    assert json.loads(a)["overall"]["em"] == 50.0


def test_report_table_layout():
    report = EvalReport()
    assert report.overall == {"n": 0, "em": 0.0, "f1": 0.0}
    report.zero_shot = 3
    assert report.table().splitlines()[-1] == "zero-shot items: 3"


# -- zero-shot ---------------------------------------------------------------------

def _item(qid, form):
    return DatasetItem(qid, qid, parse_sexpr(form))


def test_zero_shot_examples():
    train = [_item("t1", "(JOIN a.b.c m.1)")]
    test = [_item("x", "(JOIN a.b.c m.2)"), _item("y", "(AND d.e.f (JOIN a.b.c m.2))"), _item("z", "(JOIN g.h.i m.3)")]
    assert [i.qid for i in zero_shot_filter(test, train)] == ["y", "z"]
    assert [i.qid for i in zero_shot_filter(test, train, strict=True)] == ["z"]
    assert zero_shot_filter(test, []) == test


def test_zero_shot_on_fixtures(dataset):
    train = [dataset["ronny"], dataset["comet"]]
    kept = zero_shot_filter(list(dataset.values()), train)
    assert sorted(i.qid for i in kept) == ["gh3", "manado", "petdisease", "rocket", "snk"]


rels = st.sampled_from(["a.b.c", "a.b.d", "e.f.g", "e.f.h", "i.j.k"])
forms = st.lists(rels, min_size=1, max_size=3).map(
    lambda rs: "(JOIN " + rs[0] + " m.1)" if len(rs) == 1 else
    "(AND (JOIN " + rs[0] + " m.1) (JOIN " + rs[1] + " m.2))")


@settings(max_examples=100, deadline=None)
@given(st.lists(forms, max_size=6), st.lists(forms, max_size=6), st.lists(forms, max_size=3))
def test_zero_shot_subset_and_monotone(test_forms, train_forms, more):
    test = [_item(f"q{i}", f) for i, f in enumerate(test_forms)]
    train = [_item(f"t{i}", f) for i, f in enumerate(train_forms)]
    bigger = train + [_item(f"u{i}", f) for i, f in enumerate(more)]
    loose, strict = zero_shot_filter(test, train), zero_shot_filter(test, train, strict=True)
    assert set(strict) <= set(loose) <= set(test)
    assert set(zero_shot_filter(test, bigger)) <= set(loose)


# -- datasets and converters ---------------------------------------------------------

def test_dataset_round_trip(tmp_path, dataset):
    path = tmp_path / "d.jsonl"
    write_dataset(dataset.values(), path)
    again = {i.qid: i for i in load_dataset(path)}
    assert {q: print_sexpr(i.gold_sexpr) for q, i in again.items()} == \
        {q: print_sexpr(i.gold_sexpr) for q, i in dataset.items()}
    assert again["ronny"].entities == (("m.04dwjbg", "Ronny"),)


def test_duplicate_qid_rejected(tmp_path):
    line = json.dumps({"qid": "a", "question": "q", "sexpression": "(JOIN a.b.c m.1)"})
    path = tmp_path / "d.jsonl"
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DatasetError):
        load_dataset(path)


def test_bad_record_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"qid": "a", "question": "q", "sexpression": "(JOIN a.b.c m.1)", "split": "later"}\n')
    with pytest.raises(DatasetError):
        load_dataset(path)


def test_predictions_round_trip(tmp_path):
    path = tmp_path / "p.jsonl"
    preds = [Prediction("a", parse_sexpr("(JOIN a.b.c m.1)")), Prediction("b", None, outcome="parse_failure")]
    write_predictions(preds, path)
    back = load_predictions(path)
    assert [(p.qid, p.outcome) for p in back] == [("a", None), ("b", "parse_failure")]
    assert print_sexpr(back[0].sexpr) == "(JOIN a.b.c m.1)"


def test_convert_grailqa():
    recs = convert_grailqa([{
        "qid": 7, "question": "which group?", "s_expression": "(JOIN (R astronomy.comet.comet_group) m.0595vt)",
        "graph_query": {"nodes": [{"node_type": "entity", "id": "m.0595vt", "friendly_name": "Great Comet"},
                                  {"node_type": "class", "id": "astronomy.comet_group"}]},
        "answer": [{"answer_argument": "m.0fx_kreutz"}],
    }, {"qid": 8, "question": "x", "s_expression": "null"}], split="dev")
    assert len(recs) == 1
    item = records_to_items(recs)[0]
    assert item.qid == "7" and item.split == "dev" and item.entities == (("m.0595vt", "Great Comet"),)
    assert item.answers == {"m.0fx_kreutz"}


def test_convert_webqsp():
    doc = {"Questions": [{"QuestionId": "WebQTest-1", "ProcessedQuestion": "who?",
                          "Parses": [{"SExpr": "null"},
                                     {"SExpr": "(JOIN (R a.b.c) m.1)", "TopicEntityMid": "m.1",
                                      "TopicEntityName": "One"}]},
                         {"QuestionId": "WebQTest-2", "Parses": [{"SExpr": "null"}]}]}
    recs = convert_webqsp(doc)
    assert [r["qid"] for r in recs] == ["WebQTest-1"]
    assert recs[0]["entities"] == [{"mid": "m.1", "label": "One"}]


def test_records_to_items_skips_unparseable():
    recs = [{"qid": "a", "question": "q", "sexpression": "(JOIN a.b.c"},
            {"qid": "b", "question": "q", "sexpression": "(JOIN a.b.c m.1)"}]
    assert [i.qid for i in records_to_items(recs)] == ["b"]


def test_official_datasets_absent(monkeypatch, tmp_path):
    monkeypatch.delenv("DARA_DATASETS", raising=False)
    assert official_datasets() == {}
    assert official_datasets(tmp_path) == {}


def test_fixture_dataset_is_loadable():
    assert len(load_dataset(SLICE / "dataset.jsonl")) == 7


def test_official_datasets_layout(monkeypatch, tmp_path):
    def grail(qid, form):
        return {"qid": qid, "question": "q", "s_expression": form, "graph_query": {"nodes": []}}

    (tmp_path / "graphq").mkdir()
    (tmp_path / "graphq" / "train.json").write_text(json.dumps([grail(1, "(JOIN a.b.c m.1)")]))
    (tmp_path / "graphq" / "test.json").write_text(json.dumps([grail(2, "(JOIN a.b.c m.2)"),
                                                               grail(3, "(JOIN d.e.f m.2)")]))
    (tmp_path / "webqsp").mkdir()
    (tmp_path / "webqsp" / "train.json").write_text(json.dumps({"Questions": []}))
    monkeypatch.setenv("DARA_DATASETS", str(tmp_path))
    data = official_datasets()
    assert list(data) == ["graphq"]
    train, test = data["graphq"]
    assert [i.qid for i in zero_shot_filter(test, train)] == ["3"]
