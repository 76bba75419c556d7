"""Language-model adapters: a remote HTTP endpoint and a scripted replayer."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Protocol, Sequence

from ..errors import ConfigError, LlmError

logger = logging.getLogger(__name__)

Message = tuple[str, str]  # (role, text)

# where an observation starts and where the next model-written marker resumes
_OBS_START = {
    "dara": re.compile(r"###\s*Obs(?:ervation)?\s+\d+\.\d+\.\d+\s*:"),
    "dara_icl": re.compile(r"###\s*Obs(?:ervation)?\s+\d+\.\d+\.\d+\s*:"),
    "agentbench": re.compile(r"Observation\s*:"),
}
_RESUME = {
    "dara": re.compile(r"#{1,3}\s*(?:Task|Step|Action|Thought|S-exp|Final)"),
    "dara_icl": re.compile(r"#{1,3}\s*(?:Task|Step|Action|Thought|S-exp|Final)"),
    "agentbench": re.compile(r"(?:Thought|Action|Final Answer)\s*:"),
}


class LlmAdapter(Protocol):
    def complete(self, messages: Sequence[Message], stop: Sequence[str]) -> str: ...


def script_segments(text: str, profile: str = "dara") -> list[str]:
    """Cut a recorded trajectory into the pieces a model would generate.

    Observation bodies are dropped (the runtime renders its own), so each
    piece ends right before an observation marker.
    """
    start, resume = _OBS_START[profile], _RESUME[profile]
    segments, pos = [], 0
    while True:
        m = start.search(text, pos)
        if m is None:
            tail = text[pos:]
            if tail.strip():
                segments.append(tail.strip("\n"))
            return segments
        segments.append(text[pos:m.start()].strip("\n"))
        r = resume.search(text, m.end())
        if r is None:
            return segments
        pos = r.start()


class ScriptedAdapter:
    """Replays pre-written model turns in order; returns ``""`` once exhausted."""

    def __init__(self, segments: Sequence[str]):
        self.segments = list(segments)
        self.calls = 0

    @classmethod
    def from_trace(cls, text: str, profile: str = "dara") -> "ScriptedAdapter":
        return cls(script_segments(text, profile))

    @classmethod
    def from_file(cls, path: str | Path, profile: str = "dara") -> "ScriptedAdapter":
        return cls.from_trace(Path(path).read_text(encoding="utf-8"), profile)

    def complete(self, messages: Sequence[Message], stop: Sequence[str]) -> str:
        i = self.calls
        self.calls += 1
        return self.segments[i] if i < len(self.segments) else ""


class RemoteAdapter:
    """POSTs ``{"messages": [...], "stop": [...]}`` and reads ``{"content": ...}``.

    Transient failures (connection errors, HTTP 429 and 5xx) are retried
    with exponential backoff up to ``max_retries`` times.
    """

    def __init__(self, endpoint: str, api_key_env: str = "DARA_LLM_API_KEY", max_retries: int = 2,
                 timeout: float = 60.0, max_in_flight: int = 4, backoff: float = 0.5):
        if not endpoint:
            raise ConfigError("llm.endpoint is not set")
        self.endpoint = endpoint
        self.api_key = os.environ.get(api_key_env) if api_key_env else None
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, messages: Sequence[Message], stop: Sequence[str]) -> str:
        body = json.dumps({
            "messages": [{"role": r, "content": c} for r, c in messages],
            "stop": list(stop),
        }).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            req = urllib.request.Request(self.endpoint, data=body, headers=headers)
            try:
                with self._slots, urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    doc = json.loads(resp.read().decode())
            except urllib.error.HTTPError as exc:
                last = exc
                if exc.code != 429 and exc.code < 500:
                    break
                continue
            except (urllib.error.URLError, OSError) as exc:
                last = exc
                continue
            except json.JSONDecodeError as exc:
                raise LlmError(f"endpoint returned invalid JSON: {exc}") from exc
            content = doc.get("content") if isinstance(doc, dict) else None
            if not isinstance(content, str):
                raise LlmError("endpoint response has no 'content' string")
            return content
        raise LlmError(f"LLM endpoint {self.endpoint} failed: {last}")


class FixedAdapter:
    """Returns the same text on every call (handy for failure-path tests)."""

    def __init__(self, text: str):
        self.text = text
        self.calls = 0

    def complete(self, messages: Sequence[Message], stop: Sequence[str]) -> str:
        self.calls += 1
        return self.text
