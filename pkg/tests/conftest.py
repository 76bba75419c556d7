import random
import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dara.evaluation import load_dataset  # noqa: E402
from dara.kg.graph import load_graph  # noqa: E402

FIXTURES = Path(str(resources.files("dara"))) / "fixtures"
SLICE = FIXTURES / "freebase_slice"
SCRIPTS = FIXTURES / "scripts"

GOLD_FINALS = {
    "ronny": "(JOIN (R olympics.olympic_mascot.olympic_games) m.04dwjbg)",
    "comet": "(JOIN (R astronomy.comet.comet_group) m.0595vt)",
}


@pytest.fixture(scope="session")
def graph():
    return load_graph(SLICE / "triples.tsv", SLICE / "schema.json")


@pytest.fixture(scope="session")
def dataset(graph):
    return {i.qid: i for i in load_dataset(SLICE / "dataset.jsonl", graph.schema)}


@pytest.fixture
def rng():
    return random.Random(1234)


# -- acceptance summary ---------------------------------------------------------
# tests in test_acceptance.py are named test_criterion_<n>_<topic>; their outcomes are
# collected here and printed as one line per criterion at the end of the run

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    n, topic = name[len("test_criterion_"):].split("_", 1)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else "skipped"
            status = f"SKIP ({reason.removeprefix('Skipped: ')})"
        else:
            status = "PASS" if report.passed else "FAIL"
        _CRITERIA[int(n)] = (topic.replace("_", " "), status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        topic, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} {topic}: {status}")
