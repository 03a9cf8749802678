"""Shared pytest wiring: the gate suite's end-of-run summary block."""

GATE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if GATE_LINES:
        terminalreporter.section("gate summary")
        for line in GATE_LINES:
            terminalreporter.write_line(line)
