"""
Replaying an agent trajectory
=============================

The agent loop alternates model turns with action observations. Here the
model is a scripted adapter that replays a recorded trajectory, so the run
needs no network and gives the same trace every time.

Run with ``python demos/02_agent_replay.py``.
"""

from importlib import resources
from pathlib import Path

from dara.actions import ActionEnvironment
from dara.agent.llm import FixedAdapter, ScriptedAdapter, script_segments
from dara.agent.prompts import render_prompt
from dara.agent.runtime import AgentConfig, run_agent, sidecar
from dara.evaluation import load_dataset
from dara.kg.graph import load_graph
from dara.sexpr import print_sexpr

root = Path(str(resources.files("dara"))) / "fixtures"
graph = load_graph(root / "freebase_slice" / "triples.tsv", root / "freebase_slice" / "schema.json")
items = {i.qid: i for i in load_dataset(root / "freebase_slice" / "dataset.jsonl", graph.schema)}

# %%
# The actions on their own. Observations are plain strings: what the model
# reads is exactly what gets written to the trace.
env = ActionEnvironment(graph, question=items["ronny"].question)
print(env.execute("get_relations", ["m.04dwjbg"]).text)
print(env.execute("get_descriptions", ["olympics.olympic_mascot.olympic_games (outgoing)"]).text)

# %%
# The first prompt the model would see.
role, text = render_prompt("dara", items["ronny"].question, items["ronny"].entities)[0]
print(f"[{role}]", text[:300], "...")

# %%
# A recorded trajectory is cut into the pieces the model would have written.
# Observations are dropped from the script; the runtime recomputes them.
script = (root / "scripts" / "dara" / "snk.txt").read_text()
print(len(script_segments(script)), "model turns in the SNK script")

item = items["snk"]
trace = run_agent(item.question, item.entities, graph, ScriptedAdapter.from_trace(script), AgentConfig())
print(trace.serialize())
print("outcome:", trace.outcome, " final:", print_sexpr(trace.final_sexpr))
print("recomputed trace equals the script:", trace.serialize().rstrip() == script.rstrip())

# %%
# Timings and call counts go to a sidecar, never into the trace itself.
print(sidecar(trace, "snk"))

# %%
# The baseline profile: graph-walking actions that build numbered variables.
comet = items["comet"]
llm = ScriptedAdapter.from_file(root / "scripts" / "agentbench" / "comet.txt", "agentbench")
bench = run_agent(comet.question, comet.entities, graph, llm, AgentConfig(profile="agentbench"))
print(bench.serialize())
print("variable #%d stands for %s" % (bench.answer_var, print_sexpr(bench.final_sexpr)))

# %%
# A model that never follows the format gets one corrective reprompt and
# then the run closes as a parse failure instead of raising.
broken = run_agent(item.question, item.entities, graph, FixedAdapter("The answer is two."), AgentConfig())
print("outcome:", broken.outcome)
