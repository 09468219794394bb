"""Shared pytest wiring: the acceptance-criterion report."""

from contextlib import contextmanager

_criterion_lines: list[str] = []


@contextmanager
def criterion(name: str):
    """Record one pass/fail line for the acceptance summary."""
    try:
        yield
    except BaseException as err:
        message = str(err).splitlines()[0][:120] if str(err) else type(err).__name__
        _criterion_lines.append(f"criterion {name}: FAIL ({message})")
        raise
    else:
        _criterion_lines.append(f"criterion {name}: PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
