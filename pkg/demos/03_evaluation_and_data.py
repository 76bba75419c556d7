"""
Scoring runs and preparing training data
========================================

Score predictions with exact match and answer F1, restrict a test set to
unseen schema items, filter training questions, render decomposition
prompts, and check trajectories before they are used for fine-tuning.

Run with ``python demos/03_evaluation_and_data.py``.
"""

import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from dara.data import build_decomposition_prompt, filter_training_pairs, validate_trajectory, write_review_manifest
from dara.evaluation import answer_f1, evaluate_run, load_dataset, load_predictions, zero_shot_filter
from dara.kg.graph import load_graph

root = Path(str(resources.files("dara"))) / "fixtures"
graph = load_graph(root / "freebase_slice" / "triples.tsv", root / "freebase_slice" / "schema.json")
items = load_dataset(root / "freebase_slice" / "dataset.jsonl", graph.schema)
by_qid = {i.qid: i for i in items}

# %%
# Answer F1 on a single pair of sets.
print("F1({a,b}, {b,c}) =", answer_f1({"a", "b"}, {"b", "c"}))

# %%
# A four-item run: two exact, one half right, one failed to parse.
mixed = root / "mixed_eval"
report = evaluate_run(load_predictions(mixed / "predictions.jsonl"),
                      load_dataset(mixed / "dataset.jsonl", graph.schema), graph)
print(report.table())
f1s = np.array([s.f1 for s in report.items])
print("per-item F1:", f1s, " mean:", f1s.mean())

# %%
# Zero-shot partition: keep test items that use a relation or class never
# seen in training (or, with strict=True, only unseen ones).
train = [by_qid["ronny"], by_qid["comet"]]
print("unseen at least one:", [i.qid for i in zero_shot_filter(items, train)])
print("all unseen:", [i.qid for i in zero_shot_filter(items, train, strict=True)])

# %%
# Training-pair filter: one copy per logical form, only multi-subtask
# questions, and at most ten questions per relation.
kept = filter_training_pairs(items, graph.schema)
print("kept for training:", [c.qid for c in kept])

# %%
# The prompt that asks an annotator model to explain each subtask.
print(build_decomposition_prompt(by_qid["manado"], graph))

# %%
# Five checks on a trajectory: grammar, index order, grounded relations,
# final form, and action arguments. Each corrupted copy of the Ronny trace
# breaks exactly one.
for path in sorted((root / "corrupted").glob("*.txt")):
    rep = validate_trajectory(path.read_text(), by_qid["ronny"], graph)
    print(path.stem, "fails", rep.failed_checks, "-", rep.findings[0].message)

with tempfile.TemporaryDirectory() as tmp:
    text = (root / "scripts" / "dara" / "ronny.txt").read_text()
    manifest = write_review_manifest([("ronny", text, validate_trajectory(text, by_qid["ronny"], graph))], tmp)
    print((Path(tmp) / "ronny" / "checklist.md").read_text())
