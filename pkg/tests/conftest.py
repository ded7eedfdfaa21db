import pytest

CRITERIA = {
    1: "toy intent recovery",
    2: "likelihood gap to the oracle",
    3: "multimodal model beats single mode",
    4: "analytic gradients match finite differences",
    5: "mixture density validity",
    6: "k-means correctness",
    7: "metric examples",
    8: "rigid-motion equivariance",
    9: "pipeline determinism",
    10: "anchor-count sweep",
}

_outcomes: dict[int, str] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.fixture
def measured(request):
    """Record a measured quantity next to the criterion's summary line."""
    marker = request.node.get_closest_marker("criterion")

    def note(text: str):
        _details.setdefault(marker.args[0], []).append(text)
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    n = marker.args[0]
    status = "FAIL" if rep.failed else "SKIP" if rep.skipped else "PASS"
    rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    if rank[status] >= rank[_outcomes.get(n, "PASS")]:
        _outcomes[n] = status


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in _outcomes:
            continue
        detail = "; ".join(_details.get(n, []))
        terminalreporter.write_line(f"criterion {n:2d} {_outcomes[n]}  {name}" + (f"  ({detail})" if detail else ""))
