from __future__ import annotations

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def report(number: int, passed: bool, text: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
