import pytest

from qprocess import build_model

_CRITERION_RESULTS = []


@pytest.fixture
def criterion_log():
    """Collect acceptance-criterion outcomes for the end-of-run summary."""

    def log(cid: str, ok: bool, detail: str):
        _CRITERION_RESULTS.append((cid, ok, detail))

    return log


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for cid, ok, detail in _CRITERION_RESULTS:
            terminalreporter.write_line(
                "[%s] %s: %s" % (cid, "PASS" if ok else "FAIL", detail)
            )

# desk-scale reference intensities used throughout the suite
CRITICAL_A = (0.5, -1.0, 0.5)
SUPERCRITICAL_A = (0.5, -1.5, 1.0)
SUBCRITICAL_A = (1.0, -1.5, 0.5)


@pytest.fixture(scope="session")
def critical():
    return build_model(CRITICAL_A)


@pytest.fixture(scope="session")
def supercritical():
    return build_model(SUPERCRITICAL_A)


@pytest.fixture(scope="session")
def subcritical():
    return build_model(SUBCRITICAL_A)


@pytest.fixture(scope="session")
def all_models(critical, supercritical, subcritical):
    return {
        "critical": critical,
        "supercritical": supercritical,
        "subcritical": subcritical,
    }
