from __future__ import annotations

import pytest

_criteria: dict[int, list[tuple[str, bool, list[str]]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [str(v) for k, v in item.user_properties if k == "detail"]
        _criteria.setdefault(mark.args[0], []).append((item.name, rep.passed, details))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        runs = _criteria[n]
        ok = all(passed for _, passed, _ in runs)
        notes = "; ".join(d for _, _, ds in runs for d in ds)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}" + (f"  [{notes}]" if notes else ""))
