import pytest

from icpkit import _backend, classification, diagnostics, models, quantile

BACKENDS = [name for name, mod in _backend.available.items() if mod is not None]

_PATCHED = (quantile, models, classification, diagnostics)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = _backend.available[request.param]
    for m in _PATCHED:
        if hasattr(m, "kernels"):
            monkeypatch.setattr(m, "kernels", mod)
    return request.param


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
