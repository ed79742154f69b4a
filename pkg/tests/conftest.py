"""Collects acceptance verdicts and prints them as one block at the end of the run."""

ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, title, bool(passed), detail))
    print(_line(number, title, passed, detail), flush=True)


def _line(number, title, passed, detail):
    return f"{'PASS' if passed else 'FAIL'} [{number}] {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for item in sorted(ACCEPTANCE):
        terminalreporter.write_line(_line(*item))
