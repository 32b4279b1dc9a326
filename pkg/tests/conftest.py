import pytest

from ipslab._backend import BACKENDS
from ipslab.instances import toy_model

ALL_BACKENDS = ["python", "cython"]


@pytest.fixture(params=ALL_BACKENDS)
def backend(request):
    if request.param not in BACKENDS:
        pytest.skip(f"{request.param} backend not built")
    return request.param


@pytest.fixture
def sep_model():
    return toy_model(-1, 1)


@pytest.fixture
def sip_model():
    return toy_model(1, 1.0)


@pytest.fixture
def rtp_model():
    return toy_model(0, kappa=1.0, lam=0.8)


# acceptance summary: tests in test_acceptance.py attach a "criterion" and a
# "detail" user property; one line per criterion is printed at the end.
_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    label = props.get("criterion", report.nodeid.split("::")[-1])
    status = {"passed": "PASS", "failed": "FAIL"}.get(report.outcome, report.outcome.upper())
    _ACCEPTANCE.append((status, label, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {label}" + (f": {detail}" if detail else ""))
