"""Scoring predictions: exact match, answer F1, zero-shot partitions and reports."""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DatasetError, SExprError, UnknownQid
from .kg.evaluate import evaluate
from .kg.graph import KnowledgeGraph
from .sexpr import SExpr, bind, parse_sexpr, print_sexpr, schema_items, semantic_equal

SOURCES = ("grailqa", "graphq", "webqsp", "fixture")
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class DatasetItem:
    qid: str
    question: str
    gold_sexpr: SExpr
    entities: tuple[tuple[str, str], ...] = ()
    source: str = "fixture"
    split: str = "test"
    answers: frozenset[str] | None = None

    def to_record(self) -> dict:
        rec = {
            "qid": self.qid,
            "question": self.question,
            "sexpression": print_sexpr(self.gold_sexpr),
            "entities": [{"mid": m, "label": label} for m, label in self.entities],
            "split": self.split,
            "source": self.source,
        }
        if self.answers is not None:
            rec["answers"] = sorted(self.answers)
        return rec


@dataclass(frozen=True)
class Prediction:
    qid: str
    sexpr: SExpr | None
    answers: frozenset[str] | None = None
    outcome: str | None = None


def _entities(raw) -> tuple[tuple[str, str], ...]:
    out = []
    for e in raw or ():
        if isinstance(e, dict):
            out.append((e["mid"], e.get("label", e["mid"])))
        else:
            mid, label = e
            out.append((mid, label))
    return tuple(out)


def item_from_record(rec: dict, schema=None) -> DatasetItem:
    gold = parse_sexpr(rec["sexpression"])
    if schema is not None:
        gold = bind(gold, schema)
    source = rec.get("source", "fixture")
    split = rec.get("split", "test")
    if source not in SOURCES:
        raise DatasetError(f"unknown source {source!r}")
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}")
    answers = rec.get("answers")
    return DatasetItem(str(rec["qid"]), rec["question"], gold, _entities(rec.get("entities")),
                       source, split, frozenset(map(str, answers)) if answers is not None else None)


def _jsonl(path: str | Path):
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", lineno, str(path)) from None


def load_dataset(path: str | Path, schema=None) -> list[DatasetItem]:
    """One JSON record per line with qid, question, sexpression, entities, split and source."""
    items, seen = [], set()
    for lineno, rec in _jsonl(path):
        try:
            item = item_from_record(rec, schema)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad record: {exc}", lineno, str(path)) from None
        except SExprError as exc:
            raise DatasetError(f"bad gold s-expression: {exc}", lineno, str(path)) from None
        if item.qid in seen:
            raise DatasetError(f"duplicate qid {item.qid!r}", lineno, str(path))
        seen.add(item.qid)
        items.append(item)
    return items


def write_dataset(items: Iterable[DatasetItem], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_record(), sort_keys=True) + "\n")


def load_predictions(path: str | Path) -> list[Prediction]:
    """Records ``{qid, sexpression | null, answers?, outcome?}``; unparsable forms count as failures."""
    out = []
    for lineno, rec in _jsonl(path):
        if "qid" not in rec:
            raise DatasetError("prediction without qid", lineno, str(path))
        text = rec.get("sexpression")
        expr = None
        if text:
            try:
                expr = parse_sexpr(text)
            except SExprError:
                expr = None
        answers = rec.get("answers")
        out.append(Prediction(str(rec["qid"]), expr,
                              frozenset(map(str, answers)) if answers is not None else None,
                              rec.get("outcome")))
    return out


def write_predictions(preds: Iterable[Prediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in preds:
            rec = {"qid": p.qid, "sexpression": print_sexpr(p.sexpr) if p.sexpr is not None else None}
            if p.answers is not None:
                rec["answers"] = sorted(p.answers)
            if p.outcome is not None:
                rec["outcome"] = p.outcome
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- metrics ------------------------------------------------------------------

def exact_match(pred: SExpr, gold: SExpr) -> bool:
    return semantic_equal(pred, gold)


def answer_f1(pred: Iterable, gold: Iterable) -> float:
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hit = len(pred & gold)
    if hit == 0:
        return 0.0
    p, r = hit / len(pred), hit / len(gold)
    return 2 * p * r / (p + r)


def zero_shot_filter(test: Sequence[DatasetItem], train: Sequence[DatasetItem], strict: bool = False) -> list[DatasetItem]:
    """Test items whose gold schema items are unseen in training.

    Default: at least one relation or class is unseen. ``strict``: all of
    them are unseen.
    """
    seen: set[str] = set()
    for item in train:
        seen |= schema_items(item.gold_sexpr)
    out = []
    for item in test:
        items = schema_items(item.gold_sexpr)
        unseen = items - seen
        if (strict and items and unseen == items) or (not strict and unseen):
            out.append(item)
    return out


# -- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class ItemScore:
    qid: str
    em: bool
    f1: float
    outcome: str
    source: str


@dataclass
class EvalReport:
    items: list[ItemScore] = field(default_factory=list)
    zero_shot: int | None = None

    @staticmethod
    def _agg(scores: list[ItemScore]) -> dict:
        n = len(scores)
        if n == 0:
            return {"n": 0, "em": 0.0, "f1": 0.0}
        return {
            "n": n,
            "em": round(100.0 * sum(s.em for s in scores) / n, 4),
            "f1": round(100.0 * sum(s.f1 for s in scores) / n, 4),
        }

    @property
    def overall(self) -> dict:
        return self._agg(self.items)

    @property
    def per_source(self) -> dict[str, dict]:
        groups: dict[str, list[ItemScore]] = defaultdict(list)
        for s in self.items:
            groups[s.source].append(s)
        return {k: self._agg(v) for k, v in sorted(groups.items())}

    def to_dict(self) -> dict:
        doc = {
            "overall": self.overall,
            "per_source": self.per_source,
            "items": [{"qid": s.qid, "em": s.em, "f1": round(s.f1, 6), "outcome": s.outcome, "source": s.source}
                      for s in self.items],
        }
        if self.zero_shot is not None:
            doc["zero_shot_items"] = self.zero_shot
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        rows = [("source", "n", "em", "f1")]
        for name, agg in self.per_source.items():
            rows.append((name, str(agg["n"]), f"{agg['em']:.1f}", f"{agg['f1']:.1f}"))
        o = self.overall
        rows.append(("all", str(o["n"]), f"{o['em']:.1f}", f"{o['f1']:.1f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
                 for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"em {o['em']:.1f} f1 {o['f1']:.1f}")
        if self.zero_shot is not None:
            lines.append(f"zero-shot items: {self.zero_shot}")
        return "\n".join(lines) + "\n"


def _answers(expr: SExpr, kg) -> set[str]:
    if isinstance(kg, KnowledgeGraph):
        return evaluate(expr, kg).answers()
    return kg.evaluate(expr).answers()


def evaluate_run(predictions: Sequence[Prediction], dataset: Sequence[DatasetItem], kg,
                 schema=None) -> EvalReport:
    """Score every dataset item; missing or failed predictions score zero.

    ``kg`` is a :class:`~dara.kg.graph.KnowledgeGraph` or any object with an
    ``evaluate(expr)`` method (for example a SPARQL endpoint client).
    """
    by_qid = {item.qid: item for item in dataset}
    unknown = sorted({p.qid for p in predictions} - set(by_qid))
    if unknown:
        raise UnknownQid(unknown)
    schema = schema or getattr(kg, "schema", None)
    preds = {p.qid: p for p in predictions}
    report = EvalReport()
    for item in sorted(dataset, key=lambda i: i.qid):
        pred = preds.get(item.qid)
        if pred is None or pred.sexpr is None:
            outcome = "missing" if pred is None else (pred.outcome or "failed")
            report.items.append(ItemScore(item.qid, False, 0.0, outcome, item.source))
            continue
        outcome = pred.outcome or "completed"
        try:
            expr = bind(pred.sexpr, schema) if schema is not None else pred.sexpr
        except SExprError:
            report.items.append(ItemScore(item.qid, False, 0.0, "unexecutable", item.source))
            continue
        em = exact_match(expr, item.gold_sexpr)
        gold = item.answers if item.answers is not None else _answers(item.gold_sexpr, kg)
        try:
            got = pred.answers if pred.answers is not None else _answers(expr, kg)
        except SExprError:
            got, outcome = set(), "unexecutable"
        report.items.append(ItemScore(item.qid, em, answer_f1(got, gold), outcome, item.source))
    return report


# -- official dataset converters ------------------------------------------------

def convert_grailqa(records: Sequence[dict], source: str = "grailqa", split: str = "test") -> list[dict]:
    """GrailQA-style JSON (also used for GraphQuestions) to dataset records."""
    out = []
    for r in records:
        sexpr = r.get("s_expression") or r.get("sexpression")
        if not sexpr or sexpr == "null":
            continue
        nodes = (r.get("graph_query") or {}).get("nodes", [])
        ents = [{"mid": n["id"], "label": n.get("friendly_name", n["id"])}
                for n in nodes if n.get("node_type") == "entity"]
        rec = {"qid": str(r["qid"]), "question": r["question"], "sexpression": sexpr,
               "entities": ents, "split": split, "source": source}
        if "answer" in r:
            rec["answers"] = [a.get("answer_argument") for a in r["answer"] if "answer_argument" in a]
        out.append(rec)
    return out


def convert_webqsp(doc: dict, split: str = "test") -> list[dict]:
    """WebQSP JSON with s-expression annotations (``Parses[*].SExpr``) to dataset records."""
    out = []
    for q in doc.get("Questions", []):
        for parse in q.get("Parses", []):
            sexpr = parse.get("SExpr")
            if sexpr and sexpr != "null":
                ents = []
                if parse.get("TopicEntityMid"):
                    ents.append({"mid": parse["TopicEntityMid"],
                                 "label": parse.get("TopicEntityName") or parse["TopicEntityMid"]})
                out.append({"qid": str(q["QuestionId"]),
                            "question": q.get("ProcessedQuestion") or q.get("RawQuestion", ""),
                            "sexpression": sexpr, "entities": ents, "split": split, "source": "webqsp"})
                break
    return out


def convert_file(path: str | Path, source: str, split: str) -> list[dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if source == "webqsp":
        return convert_webqsp(doc, split)
    return convert_grailqa(doc, source, split)


def records_to_items(records: Iterable[dict]) -> list[DatasetItem]:
    """Parse converted records, skipping gold forms the s-expression grammar does not cover."""
    items = []
    for rec in records:
        try:
            items.append(item_from_record(rec))
        except SExprError:
            continue
    return items


DATASET_FILES = {"grailqa": ("train.json", "dev.json"), "graphq": ("train.json", "test.json"),
                 "webqsp": ("train.json", "test.json")}


def official_datasets(root: str | Path | None = None) -> dict[str, tuple[list[DatasetItem], list[DatasetItem]]]:
    """Load ``(train, test)`` per source from ``$DARA_DATASETS/<source>/``; absent sources are skipped."""
    root = root or os.environ.get("DARA_DATASETS")
    if not root:
        return {}
    out = {}
    for source, (train_name, test_name) in DATASET_FILES.items():
        base = Path(root) / source
        if not (base / train_name).exists() or not (base / test_name).exists():
            continue
        train = records_to_items(convert_file(base / train_name, source, "train"))
        test = records_to_items(convert_file(base / test_name, source, "test"))
        out[source] = (train, test)
    return out
