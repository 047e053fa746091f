import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

# criterion number -> (title, "PASS" | "FAIL", detail)
CRITERIA_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA_RESULTS):
        title, status, detail = CRITERIA_RESULTS[n]
        line = f"criterion {n:2d} {status}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def record(n: int, title: str, status: str, detail: str = ""):
        CRITERIA_RESULTS[n] = (title, status, detail)
        print(f"criterion {n} {status}: {title}" + (f" ({detail})" if detail else ""))
    return record
