"""Command-line entry point: ``dara sexpr|agent|eval|data ...``.

Exit status: 0 on success (per-item failures are reported in band), 2 for
bad input, 3 for configuration problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from importlib import resources
from pathlib import Path

from . import __version__
from .agent.llm import RemoteAdapter, ScriptedAdapter
from .agent.runtime import AgentConfig, run_agent, sidecar
from .data import (
    FilterPolicy, filter_training_pairs, task_lines, validate_trajectory, write_prompt_bundle,
    write_review_manifest,
)
from .decompose import decompose_by_ops
from .errors import ConfigError, DaraError, EndpointError, GraphParseError, SchemaViolation, UnknownProfile
from .evaluation import (
    Prediction, evaluate_run, load_dataset, load_predictions, write_dataset, write_predictions,
    zero_shot_filter,
)
from .kg.endpoint import SparqlEndpoint
from .kg.evaluate import evaluate
from .kg.graph import load_graph
from .kg.sparql import compile_sparql
from .retrieval import make_provider
from .sexpr import AtomBase, LiteralAtom, SExpr, bind, parse_sexpr, print_sexpr

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3

CONFIG_KEYS = {
    "kg": {"path", "schema", "endpoint"},
    "llm": {"endpoint", "api_key_env", "max_retries", "timeout", "max_in_flight"},
    "retriever": {"mode", "endpoint", "cache_size"},
    "agent": {f.name for f in fields(AgentConfig)},
    "eval": {"zero_shot", "train"},
}


# -- configuration -------------------------------------------------------------

def load_config(path: str | None) -> dict:
    """Read the JSON config file (from ``--config`` or ``$DARA_CONFIG``) and check its keys."""
    path = path or os.environ.get("DARA_CONFIG")
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for section, body in doc.items():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        extra = set(body) - CONFIG_KEYS[section]
        if extra:
            raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(extra))}")
    return doc


def setting(args, flag: str, config: dict, section: str, key: str, default=None):
    """Flag value if given, else the config file value, else ``default``."""
    value = getattr(args, flag, None)
    if value is not None:
        return value
    return config.get(section, {}).get(key, default)


def resolve_path(p: str | os.PathLike) -> Path:
    """Existing path as given; ``fixtures/...`` falls back to the fixtures shipped in the package."""
    path = Path(p)
    if path.exists():
        return path
    parts = path.parts
    if parts and parts[0] == "fixtures":
        packaged = Path(str(resources.files("dara"))) / path
        if packaged.exists():
            return packaged
    return path


def open_graph(args, config: dict, required: bool = True):
    kg = setting(args, "kg", config, "kg", "path")
    schema = setting(args, "schema", config, "kg", "schema")
    if not kg:
        if required:
            raise ConfigError("no knowledge graph given (use --kg or kg.path)")
        return None
    kg = resolve_path(kg)
    if kg.is_dir():
        triples, schema = kg / "triples.tsv", resolve_path(schema) if schema else kg / "schema.json"
    else:
        if not schema:
            raise ConfigError("--kg names a triples file, so --schema is needed too")
        triples, schema = kg, resolve_path(schema)
    for f in (triples, schema):
        if not f.exists():
            raise ConfigError(f"knowledge graph file {f} does not exist")
    try:
        return load_graph(triples, schema)
    except (GraphParseError, SchemaViolation) as exc:
        raise ConfigError(f"cannot load the knowledge graph: {exc}") from exc


def agent_config(args, config: dict) -> AgentConfig:
    values = dict(config.get("agent", {}))
    for f in fields(AgentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return AgentConfig(**values)


# -- sexpr -----------------------------------------------------------------------

def read_expr(value: str) -> str:
    path = Path(value)
    if not value.lstrip().startswith("(") and path.is_file():
        return path.read_text(encoding="utf-8").strip()
    return value


def ast_lines(expr: SExpr, depth: int = 0) -> list[str]:
    pad = "  " * depth
    if isinstance(expr, LiteralAtom):
        return [f"{pad}{expr.kind} {print_sexpr(expr)}"]
    if isinstance(expr, AtomBase):
        return [f"{pad}{expr.kind} {print_sexpr(expr)}"]
    out = [f"{pad}{expr.kind}"]
    for child in expr.children():
        out += ast_lines(child, depth + 1)
    return out


def cmd_sexpr(args, config: dict, out) -> int:
    text = read_expr(args.expr)
    needs_graph = args.action in ("eval", "decompose")
    graph = open_graph(args, config, required=needs_graph)
    expr = parse_sexpr(text)
    if graph is not None:
        expr = bind(expr, graph.schema)
    if args.action == "parse":
        out.write("\n".join(ast_lines(expr)) + "\n")
    elif args.action == "print":
        out.write(print_sexpr(expr) + "\n")
    elif args.action == "eval":
        den = evaluate(expr, graph)
        if den.kind == "count":
            out.write(f"{den.value}\n")
        else:
            out.write("".join(a + "\n" for a in sorted(den.answers())))
    elif args.action == "compile":
        out.write(compile_sparql(expr, graph.schema if graph else None) + "\n")
    elif args.action == "decompose":
        out.write("\n".join(task_lines(decompose_by_ops(expr, graph.schema))) + "\n")
    return EXIT_OK


# -- agent -----------------------------------------------------------------------

class ScriptLibrary:
    """Scripts for ``--llm scripted:<dir>``.

    ``<dir>`` holds ``<qid>.txt`` files (optionally under a ``<profile>/``
    subdirectory). ``fixtures/<qid>`` selects one packaged script.
    """

    def __init__(self, target: str, profile: str):
        self.profile = profile
        self.only: str | None = None
        root = resolve_path(target)
        if target.rstrip("/") == "fixtures" or (Path(target).parts[:1] == ("fixtures",) and not root.is_dir()):
            if target.rstrip("/") != "fixtures":
                self.only = Path(target).name
            root = resolve_path("fixtures/scripts")
        if not root.is_dir():
            raise ConfigError(f"script directory {target} does not exist")
        self.root = root

    def path(self, qid: str) -> Path | None:
        if self.only is not None and qid != self.only:
            return None
        for p in (self.root / self.profile / f"{qid}.txt", self.root / f"{qid}.txt"):
            if p.is_file():
                return p
        return None


def _llm_factory(args, config: dict, profile: str, replay: bool):
    target = setting(args, "llm", config, "llm", "endpoint")
    if not target:
        raise ConfigError("no model given (use --llm or llm.endpoint)")
    if target.startswith("scripted:"):
        lib = ScriptLibrary(target[len("scripted:"):], profile)
        return lambda qid: (ScriptedAdapter.from_file(p, profile) if (p := lib.path(qid)) else None)
    if replay:
        raise ConfigError("agent replay needs --llm scripted:<dir>")
    llm_cfg = config.get("llm", {})
    key_env = llm_cfg.get("api_key_env", "DARA_LLM_API_KEY")
    adapter = RemoteAdapter(target, api_key_env=key_env, max_retries=llm_cfg.get("max_retries", 2),
                            timeout=llm_cfg.get("timeout", 60.0), max_in_flight=llm_cfg.get("max_in_flight", 4))
    return lambda qid: adapter


def cmd_agent(args, config: dict, out) -> int:
    cfg = agent_config(args, config)
    graph = open_graph(args, config)
    if not args.dataset:
        raise ConfigError("no dataset given (use --dataset)")
    items = load_dataset(resolve_path(args.dataset), graph.schema)
    if args.qid:
        wanted = set(args.qid)
        items = [i for i in items if i.qid in wanted]
    make_llm = _llm_factory(args, config, cfg.profile, args.action == "replay")
    provider = make_provider(setting(args, "retriever", config, "retriever", "mode", "lexical"),
                             config.get("retriever", {}).get("endpoint"),
                             config.get("retriever", {}).get("cache_size", 10_000))
    out_dir = Path(args.out)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)

    def one(item):
        llm = make_llm(item.qid)
        if llm is None:
            return item, None
        return item, run_agent(item.question, item.entities, graph, llm, cfg, provider)

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(one, items))

    entries, preds = [], []
    for item, trace in results:
        if trace is None:
            entries.append({"qid": item.qid, "outcome": "skipped", "trace": None})
            continue
        trace_path = out_dir / "traces" / f"{item.qid}.txt"
        trace_path.write_text(trace.serialize(), encoding="utf-8")
        meta = sidecar(trace, item.qid)
        meta_path = out_dir / "traces" / f"{item.qid}.meta.json"
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        entries.append({"qid": item.qid, "outcome": trace.outcome, "trace": f"traces/{trace_path.name}",
                        "meta": f"traces/{meta_path.name}", "final_sexpr": meta["final_sexpr"],
                        "wall_time": meta["wall_time"], "llm_calls": meta["llm_calls"],
                        "prompt_tokens": meta["prompt_tokens"], "completion_tokens": meta["completion_tokens"]})
        preds.append(Prediction(item.qid, trace.final_sexpr, None, trace.outcome))
        out.write(f"{item.qid}: {trace.outcome}\n")
    write_predictions(preds, out_dir / "predictions.jsonl")
    manifest = {
        "config": {**config, "agent": cfg.to_dict()},
        "dataset": str(args.dataset),
        "profile": cfg.profile,
        "output_dir": str(out_dir),
        "seed": args.seed,
        "predictions": "predictions.jsonl",
        "items": entries,
        "totals": {
            "wall_time": round(time.perf_counter() - start, 6),
            "llm_calls": sum(e.get("llm_calls", 0) for e in entries),
            "prompt_tokens": sum(e.get("prompt_tokens", 0) for e in entries),
            "completion_tokens": sum(e.get("completion_tokens", 0) for e in entries),
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    counts: dict[str, int] = {}
    for e in entries:
        counts[e["outcome"]] = counts.get(e["outcome"], 0) + 1
    out.write(", ".join(f"{k} {v}" for k, v in sorted(counts.items())) + "\n")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------

def cmd_eval(args, config: dict, out) -> int:
    endpoint = setting(args, "endpoint", config, "kg", "endpoint")
    graph = open_graph(args, config, required=endpoint is None)
    schema = graph.schema if graph is not None else None
    if not args.pred or not args.dataset:
        raise ConfigError("eval needs --pred and --dataset")
    dataset = load_dataset(resolve_path(args.dataset), schema)
    preds = load_predictions(resolve_path(args.pred))
    known = {i.qid for i in dataset}
    zero_shot = args.zero_shot if args.zero_shot is not None else config.get("eval", {}).get("zero_shot")
    count = None
    if zero_shot and zero_shot != "off":
        train_path = setting(args, "train", config, "eval", "train")
        if not train_path:
            raise ConfigError("--zero-shot needs --train")
        train = load_dataset(resolve_path(train_path), schema)
        dataset = zero_shot_filter(dataset, train, strict=zero_shot == "strict")
        count = len(dataset)
        keep = {i.qid for i in dataset}
        preds = [p for p in preds if p.qid in keep or p.qid not in known]
    kg = graph if graph is not None else _EndpointKG(SparqlEndpoint(endpoint), schema)
    report = evaluate_run(preds, dataset, kg, schema)
    report.zero_shot = count
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    out.write(report.table())
    return EXIT_OK


class _EndpointKG:
    def __init__(self, endpoint: SparqlEndpoint, schema):
        self.endpoint, self.schema = endpoint, schema

    def evaluate(self, expr):
        return self.endpoint.evaluate(expr, self.schema)


# -- data ------------------------------------------------------------------------

def _trace_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.glob("*.txt"))
    return [path]


def _qid_for(stem: str, qids: set[str]) -> str | None:
    if stem in qids:
        return stem
    matches = [q for q in qids if stem.startswith(q + "_")]
    return max(matches, key=len) if matches else None


def cmd_data(args, config: dict, out) -> int:
    graph = open_graph(args, config)
    if not args.dataset:
        raise ConfigError("no dataset given (use --dataset)")
    items = load_dataset(resolve_path(args.dataset), graph.schema)
    if args.action == "filter":
        policy = FilterPolicy(require_complex=not args.keep_simple, max_per_relation=args.max_per_relation)
        kept = filter_training_pairs(items, graph.schema, policy)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            write_dataset([c.item for c in kept], args.out)
        out.write(f"kept {len(kept)} of {len(items)} items\n")
    elif args.action == "prompts":
        if not args.out:
            raise ConfigError("data prompts needs --out <dir>")
        written, skipped = write_prompt_bundle(items, graph, args.out)
        for qid, why in sorted(skipped.items()):
            out.write(f"skipped {qid}: {why}\n")
        out.write(f"wrote {len(written)} prompt file(s) to {args.out}\n")
    elif args.action == "validate":
        if not args.traces:
            raise ConfigError("data validate needs --traces")
        by_qid = {i.qid: i for i in items}
        profile = args.profile or config.get("agent", {}).get("profile", "dara")
        reports, entries = [], []
        for path in _trace_files(resolve_path(args.traces)):
            qid = _qid_for(path.stem, set(by_qid))
            if qid is None:
                out.write(f"skipped {path.name}: no dataset item\n")
                continue
            text = path.read_text(encoding="utf-8")
            rep = validate_trajectory(text, by_qid[qid], graph, profile, qid=path.stem)
            reports.append(rep)
            entries.append((path.stem, text, rep))
        failed = sum(len(r.failed_checks) for r in reports)
        doc = {"traces": len(reports), "failed_checks": failed, "reports": [r.to_dict() for r in reports]}
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if args.review:
            write_review_manifest(entries, args.review)
        for r in reports:
            out.write(f"{r.qid}: {'ok' if r.ok else 'failed ' + ','.join(r.failed_checks)}\n")
        out.write(f"{len(reports)} trace(s), {failed} failed check(s)\n")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _kg_flags(p):
    p.add_argument("--kg", help="graph directory (triples.tsv + schema.json) or a triples file")
    p.add_argument("--schema", help="schema JSON when --kg is a triples file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dara", description="Knowledge-graph QA tools.")
    parser.add_argument("--version", action="version", version=f"dara {__version__}")
    parser.add_argument("--config", help="JSON config file (default: $DARA_CONFIG)")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized step (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sexpr", help="parse, print, evaluate, compile or decompose a logical form")
    sp.add_argument("action", choices=["parse", "print", "eval", "compile", "decompose"])
    sp.add_argument("--expr", required=True, help="s-expression text or a file holding one")
    _kg_flags(sp)

    ap = sub.add_parser("agent", help="run the agent over a dataset or replay recorded scripts")
    ap.add_argument("action", choices=["run", "replay"])
    ap.add_argument("--profile", choices=["dara", "dara_icl", "agentbench"])
    ap.add_argument("--dataset", help="dataset JSONL")
    _kg_flags(ap)
    ap.add_argument("--llm", help="model endpoint URL or scripted:<dir>")
    ap.add_argument("--retriever", choices=["lexical", "hashing", "embedding"], help="schema ranking mode")
    ap.add_argument("--out", default="runs/latest", help="output directory (default runs/latest)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel agent sessions")
    ap.add_argument("--qid", action="append", help="restrict to this qid (repeatable)")
    ap.add_argument("--topk", type=int)
    ap.add_argument("--deep-read-n", dest="deep_read_n", type=int)
    ap.add_argument("--max-tasks", dest="max_tasks", type=int)
    ap.add_argument("--max-steps-per-task", dest="max_steps_per_task", type=int)
    ap.add_argument("--max-actions-per-step", dest="max_actions_per_step", type=int)
    ap.add_argument("--baseline-max-actions", dest="baseline_max_actions", type=int)

    ep = sub.add_parser("eval", help="score predictions against a dataset")
    ep.add_argument("--pred", help="predictions JSONL")
    ep.add_argument("--dataset", help="dataset JSONL")
    _kg_flags(ep)
    ep.add_argument("--endpoint", help="SPARQL endpoint used instead of --kg")
    ep.add_argument("--zero-shot", dest="zero_shot", nargs="?", const="at_least_one",
                    choices=["at_least_one", "strict", "off"], help="score only zero-shot items")
    ep.add_argument("--train", help="training dataset for --zero-shot")
    ep.add_argument("--out", help="write the JSON report here")
    ep.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; scoring is fast")

    dp = sub.add_parser("data", help="build fine-tuning artifacts")
    dp.add_argument("action", choices=["filter", "prompts", "validate"])
    dp.add_argument("--dataset", help="dataset JSONL")
    _kg_flags(dp)
    dp.add_argument("--out", help="output file (filter, validate) or directory (prompts)")
    dp.add_argument("--keep-simple", action="store_true", help="filter: keep single-subtask items")
    dp.add_argument("--max-per-relation", type=int, default=10, help="filter: cap per relation (default 10)")
    dp.add_argument("--traces", help="validate: trace file or directory of <qid>.txt files")
    dp.add_argument("--profile", choices=["dara", "dara_icl", "agentbench"], help="validate: trace syntax")
    dp.add_argument("--review", help="validate: also write a review manifest directory")
    return parser


COMMANDS = {"sexpr": cmd_sexpr, "agent": cmd_agent, "eval": cmd_eval, "data": cmd_data}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    random.seed(args.seed)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config, out)
    except (ConfigError, UnknownProfile, EndpointError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DaraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
