import os

# acceptance results are collected here and echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
    path = os.environ.get("DROWSYQ_ACCEPTANCE_OUT")
    if path:
        with open(path, "w") as fh:
            fh.write("\n".join(ACCEPTANCE_LINES) + "\n")
