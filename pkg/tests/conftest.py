import os
import random

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("RANKONE_HYPOTHESIS_PROFILE", "default"))


CRITERIA = {
    1: "finite stabilizer action at orders n+2, n = 2..5",
    2: "order n+1 stabilizer matrices and closed forms, n = 2..7",
    3: "order n+2 bracket tables, n = 2..6",
    4: "jet prolongation at the origin, n = 2..5",
    5: "rank one completion and full normal form template, n <= 7",
    6: "obstruction equations I and II, n = 5, 6, 7",
    7: "non-existence verdict on seeded instances, n = 5, 6, 7",
    8: "randomized property suites",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for k in getattr(report, "criteria", ()):
        _outcomes.setdefault(k, []).append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        res = _outcomes.get(k)
        if res is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(res) else "FAIL"
        n_ok = sum(res or ())
        terminalreporter.write_line(
            f"criterion {k}: {status} ({n_ok}/{len(res or ())} tests) - {CRITERIA[k]}")


@pytest.fixture
def rng(request):
    return random.Random(request.node.nodeid)
