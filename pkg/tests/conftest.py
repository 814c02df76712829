import warnings

import pytest

from succinct_oram import kernel
from succinct_oram.params import TreeParams

BACKENDS = sorted(kernel.BACKENDS)

_criteria: dict[int, dict] = {}


def _entry(n, title):
    return _criteria.setdefault(n, {"title": title, "ok": True, "notes": [], "values": []})


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    entry = _entry(*m.args)
    if call.excinfo is not None:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] else "FAIL"
        extra = f" ({'; '.join(e['notes'])})" if e["notes"] else ""
        terminalreporter.write_line(f"criterion {n}: {status}  {e['title']}{extra}")
        for v in e["values"]:
            terminalreporter.write_line(f"    {v}")


@pytest.fixture
def measured(request):
    """Record a measured value; it is printed under the criterion's verdict line."""
    m = request.node.get_closest_marker("criterion")
    entry = _entry(*m.args)

    def note(text):
        entry["values"].append(text)
        print(text)
    return note


def manual(N, B, Z, L, M, construction):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TreeParams.manual(N, B, Z, L, M, construction)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param
