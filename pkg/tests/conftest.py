import numpy as np
import pytest
from hypothesis import strategies as st

from stoch_consensus.graph import Digraph

EX51_EDGES = [(3, 1), (1, 2), (1, 3), (2, 3), (3, 4)]


@pytest.fixture
def ex51():
    return Digraph.from_edges(4, EX51_EDGES)


@pytest.fixture
def fig4a():
    return Digraph.undirected(4, [(1, 2), (2, 3)])


@pytest.fixture
def fig4b():
    return Digraph.undirected(4, [(3, 4), (1, 3)])


def random_digraph(rng: np.random.Generator, n: int, p: float) -> Digraph:
    edges = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v and rng.random() < p]
    return Digraph.from_edges(n, edges)


@st.composite
def digraphs(draw, min_nodes=1, max_nodes=6):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return Digraph.from_edges(n, chosen)


# one summary line per acceptance criterion, in criterion order
_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})
    if call.excinfo is not None:
        entry["ok"] = False
    if call.when == "call":
        entry["ran"] = True
        entry["notes"] += [str(v) for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        verdict = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        notes = "; ".join(entry["notes"])
        terminalreporter.write_line(f"{verdict}  {number:>2}. {entry['title']}" + (f"  [{notes}]" if notes else ""))
