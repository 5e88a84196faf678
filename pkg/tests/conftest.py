"""Collects acceptance-criterion verdicts and prints one line per criterion."""
import pytest

CRITERIA = {}


@pytest.fixture
def criterion():
    def record(num: int, ok: bool, detail: str):
        prev = CRITERIA.get(num)
        # a criterion split over several tests passes only if every part passes
        if prev is not None:
            ok, detail = ok and prev[0], f"{prev[1]}; {detail}"
        CRITERIA[num] = (ok, detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num]
        terminalreporter.write_line(f"CRITERION {num}: {'PASS' if ok else 'FAIL'}  {detail}")
