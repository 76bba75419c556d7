"""Prompt assembly from the versioned templates under ``dara/assets/prompts``."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

from ..errors import UnknownProfile

PROMPT_VERSION = "v1"
PROFILES = ("dara", "dara_icl", "agentbench")
ICL_ACK = "Yes, the instructions and the example are clear."


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    path = resources.files("dara") / "assets" / "prompts" / f"{name}-{PROMPT_VERSION}.txt"
    return Template(path.read_text(encoding="utf-8").rstrip("\n"))


def entity_sentence(entities) -> str:
    parts = [f"{label} ({mid})" for mid, label in entities]
    if not parts:
        return "No entity is linked."
    if len(parts) == 1:
        return f"The linked entity is {parts[0]}."
    return f"The linked entities are {', '.join(parts[:-1])}, and {parts[-1]}."


def render_prompt(profile: str, question: str, entities, trace_text: str = "", config=None,
                  correction: str | None = None) -> list[tuple[str, str]]:
    """Messages for the next model call.

    The trace so far is sent as a trailing assistant message for the model
    to continue; ``correction`` adds a user turn after it.
    """
    max_actions = getattr(config, "baseline_max_actions", 15)
    if profile == "dara":
        messages = [("user", load_template("dara").substitute(question=question, entities=entity_sentence(entities)))]
    elif profile == "agentbench":
        labels = ", ".join(label for _, label in entities)
        messages = [("user", load_template("agentbench").substitute(question=question, labels=labels,
                                                                    max_actions=max_actions))]
    elif profile == "dara_icl":
        messages = [
            ("user", load_template("dara_icl").substitute(max_actions=max_actions)),
            ("assistant", ICL_ACK),
            ("user", f"Good. The new question is {question} {entity_sentence(entities)}"),
        ]
    else:
        raise UnknownProfile(f"unknown profile {profile!r} (choose from {', '.join(PROFILES)})")
    if trace_text:
        messages.append(("assistant", trace_text.rstrip("\n")))
    if correction:
        messages.append(("user", f"The last reply could not be read: {correction}. "
                                 "Continue the trajectory using the required markers."))
    return messages
