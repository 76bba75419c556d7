"""The agent loop: ask the model, execute its action, feed back the observation."""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import asdict, dataclass

from ..actions import ActionEnvironment, render
from ..errors import ConfigError, DaraError, GrammarError, LlmError, SExprError, UnknownProfile
from ..kg.graph import KnowledgeGraph
from ..sexpr import bind, print_sexpr, substitute_refs
from .prompts import PROFILES, render_prompt
from .trace import (
    ACTIONABLE, Action, ErrorNote, FinalAnswer, FinalSexp, Obs, OrderChecker, ReasoningTrace,
    StepHeader, StepSexp, TaskHeader, TaskSexp, split_events,
)

logger = logging.getLogger(__name__)

STOP_SEQUENCES = {
    "dara": ("### Obs",),
    "dara_icl": ("### Observation", "### Obs"),
    "agentbench": ("Observation:",),
}


@dataclass(frozen=True)
class AgentConfig:
    topk: int = 5
    deep_read_n: int = 2
    max_tasks: int = 10
    max_steps_per_task: int = 5
    max_actions_per_step: int = 4
    baseline_max_actions: int = 15
    profile: str = "dara"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise UnknownProfile(f"unknown profile {self.profile!r}")
        for name in ("topk", "deep_read_n", "max_tasks", "max_steps_per_task",
                     "max_actions_per_step", "baseline_max_actions"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"agent.{name} must be a positive integer, got {value!r}")

    @property
    def call_limit(self) -> int:
        if self.profile == "dara":
            return self.max_tasks * self.max_steps_per_task * (self.max_actions_per_step + 2)
        return self.baseline_max_actions + 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunStats:
    llm_calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    wall_time: float = 0.0


def _words(text: str) -> int:
    return len(text.split())


class _Session:
    def __init__(self, question, entities, graph: KnowledgeGraph, llm, config: AgentConfig, provider):
        self.config = config
        self.profile = config.profile
        self.llm = llm
        self.graph = graph
        self.trace = ReasoningTrace(question, [tuple(e) for e in entities], self.profile)
        self.env = ActionEnvironment(graph, provider, config.topk, question)
        self.checker = OrderChecker(self.profile)
        self.stats = RunStats()
        self.actions_total = 0

    def close(self, outcome: str, note: str | None = None):
        if note:
            self.trace.events.append(ErrorNote(note))
        self.trace.outcome = outcome

    def run(self) -> ReasoningTrace:
        start = time.perf_counter()
        correction = None
        while self.trace.outcome is None:
            if self.stats.llm_calls >= self.config.call_limit:
                self.close("budget_exhausted", f"model call limit of {self.config.call_limit} reached")
                break
            messages = render_prompt(self.profile, self.trace.question, self.trace.entities,
                                     self.trace.serialize(), self.config, correction)
            try:
                text = self.llm.complete(messages, STOP_SEQUENCES[self.profile])
            except LlmError as exc:
                self.close("action_error", str(exc))
                break
            self.stats.llm_calls += 1
            self.stats.prompt_tokens += sum(_words(m) for _, m in messages)
            self.stats.completion_tokens += _words(text)
            try:
                events = self._accept_segment(text)
            except GrammarError as exc:
                if correction is not None:
                    self.close("parse_failure", str(exc))
                    break
                correction = str(exc)
                continue
            correction = None
            for ev in events:
                self.handle(ev)
                if self.trace.outcome is not None:
                    break
        self.stats.wall_time = time.perf_counter() - start
        self.trace.stats = self.stats
        return self.trace

    def _accept_segment(self, text: str) -> list:
        pairs = split_events(text, self.profile)
        for n, (_, ev) in enumerate(pairs):
            if isinstance(ev, Action):
                pairs = pairs[: n + 1]  # anything after an action was written without its observation
                break
        if not any(isinstance(ev, ACTIONABLE) for _, ev in pairs):
            raise GrammarError("no action or final answer in the reply", pairs[-1][0] if pairs else 1,
                               "an Action or a final marker")
        trial = copy.deepcopy(self.checker)
        events = [trial.accept(ev, line) for line, ev in pairs]
        self.checker = trial
        return events

    def handle(self, ev):
        cfg, trace, env = self.config, self.trace, self.env
        if isinstance(ev, TaskHeader) and ev.i > cfg.max_tasks:
            return self.close("budget_exhausted", f"task limit of {cfg.max_tasks} reached")
        if isinstance(ev, StepHeader) and ev.j > cfg.max_steps_per_task:
            return self.close("budget_exhausted", f"step limit of {cfg.max_steps_per_task} reached")
        if isinstance(ev, Action):
            self.actions_total += 1
            if self.profile == "dara" and ev.k > cfg.max_actions_per_step:
                return self.close("budget_exhausted", f"action limit of {cfg.max_actions_per_step} per step reached")
            if self.profile != "dara" and self.actions_total > cfg.baseline_max_actions:
                return self.close("budget_exhausted", f"action limit of {cfg.baseline_max_actions} reached")
        trace.events.append(ev)
        if isinstance(ev, TaskHeader):
            env.task_text = ev.text
        elif isinstance(ev, Action):
            try:
                text = env.execute(ev.name, list(ev.args), self.profile).text
            except DaraError as exc:
                text = render("error", (str(exc),))
            obs = self.checker.accept(Obs(ev.i, ev.j, ev.k, text))
            trace.events.append(obs)
        elif isinstance(ev, StepSexp):
            env.bindings[f"s-exp-{ev.i}.{ev.j}"] = ev.expr
        elif isinstance(ev, TaskSexp):
            env.bindings[f"s-exp-{ev.i}"] = ev.expr
        elif isinstance(ev, FinalSexp):
            try:
                trace.final_sexpr = bind(substitute_refs(ev.expr, env.bindings), self.graph.schema)
            except SExprError as exc:
                return self.close("action_error", f"final s-expression is not executable: {exc}")
            self.close("completed")
        elif isinstance(ev, FinalAnswer):
            try:
                var = env.variable(ev.var)
            except DaraError as exc:
                return self.close("action_error", str(exc))
            trace.answer_var = var.id
            trace.final_sexpr = var.sexpr
            self.close("completed")


def run_agent(question: str, entities, graph: KnowledgeGraph, llm, config: AgentConfig | None = None,
              provider="lexical") -> ReasoningTrace:
    """Drive one question to a closed trace. Never raises for model or action faults."""
    config = config or AgentConfig()
    return _Session(question, entities, graph, llm, config, provider).run()


def run_dara(question, entities, graph, llm, config: AgentConfig | None = None, provider="lexical") -> ReasoningTrace:
    config = config or AgentConfig()
    if config.profile not in ("dara", "dara_icl"):
        config = AgentConfig(**{**config.to_dict(), "profile": "dara"})
    return run_agent(question, entities, graph, llm, config, provider)


def run_agentbench(question, entities, graph, llm, config: AgentConfig | None = None,
                   provider="lexical") -> ReasoningTrace:
    config = AgentConfig(**{**(config or AgentConfig()).to_dict(), "profile": "agentbench"})
    return run_agent(question, entities, graph, llm, config, provider)


def run_dara_icl(question, entities, graph, llm, config: AgentConfig | None = None,
                 provider="lexical") -> ReasoningTrace:
    config = AgentConfig(**{**(config or AgentConfig()).to_dict(), "profile": "dara_icl"})
    return run_agent(question, entities, graph, llm, config, provider)


def sidecar(trace: ReasoningTrace, qid: str) -> dict:
    """Run metadata stored next to a trace file (kept out of the trace for reproducibility)."""
    stats = getattr(trace, "stats", None) or RunStats()
    return {
        "qid": qid,
        "profile": trace.profile,
        "outcome": trace.outcome,
        "final_sexpr": print_sexpr(trace.final_sexpr) if trace.final_sexpr is not None else None,
        "wall_time": round(stats.wall_time, 6),
        "llm_calls": stats.llm_calls,
        "prompt_tokens": stats.prompt_tokens,
        "completion_tokens": stats.completion_tokens,
    }
