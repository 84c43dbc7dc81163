import pytest

from hmcompress.experiments import pinn_fixture

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def trained_pinn():
    """The frozen Poisson training run, shared by every test that needs it."""
    return pinn_fixture()


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)``; printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
