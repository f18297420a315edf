import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criterion_lines = []


def record_criterion(line):
    _criterion_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
