import pytest

CRITERIA = {
    1: "Kelly oracle on random horse races",
    2: "KKT certificate and grid search",
    3: "capacity / fractional-Kelly equivalence",
    4: "water-filling closed form",
    5: "single-branch Rayleigh capacity",
    6: "order implication chain",
    7: "FVSI bounds",
    8: "data processing inequality",
    9: "SI test calibration and power",
    10: "statistic identities",
    11: "byte-identical CLI re-runs",
}

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or rep.failed:
        _outcomes.setdefault(n, []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        res = _outcomes.get(n)
        if res is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(res) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status:7s} {label}")
