import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthonormal(rng, n, m):
    return np.linalg.qr(rng.standard_normal((n, m)))[0]


_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    ok = rep.passed and not hasattr(rep, "wasxfail")
    entry = _CRITERIA.setdefault(mark.args[0], {"ok": True, "failed": []})
    if not ok:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        line = f"criterion {n:2d}: {'PASS' if e['ok'] else 'FAIL'}"
        if e["failed"]:
            line += "  (" + ", ".join(e["failed"]) + ")"
        terminalreporter.write_line(line)
