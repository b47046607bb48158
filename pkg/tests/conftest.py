import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "gradient oracle suite",
    2: "closed-form loss checks",
    3: "equivalence oracles",
    4: "Cora fairness reproduction",
    5: "Cora DP@40 ordering",
    6: "variant ordering on Cora",
    7: "c-sweep trend",
    8: "CFO rank property",
    9: "AUG sweep sanity",
    10: "determinism",
    11: "scaling smoke",
}

_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number the test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[crit].append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit, title in CRITERIA.items():
        results = _outcomes.get(crit)
        if not results:
            terminalreporter.write_line(f"criterion {crit:2d} NOT RUN  {title}")
            continue
        bad = [name for name, outcome in results if outcome != "passed"]
        status = "FAIL" if bad else "PASS"
        detail = f" ({', '.join(bad)})" if bad else ""
        terminalreporter.write_line(f"criterion {crit:2d} {status}     {title}{detail}")
