import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--paper-scale",
        action="store_true",
        default=False,
        help="run the N=500 sweeps (several minutes on one core)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "paper_scale: N=500 Monte Carlo sweep, needs --paper-scale")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--paper-scale"):
        return
    skip = pytest.mark.skip(reason="needs --paper-scale")
    for item in items:
        if "paper_scale" in item.keywords:
            item.add_marker(skip)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Print and remember one PASS/FAIL line for an acceptance criterion."""

    def emit(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion:2d}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
