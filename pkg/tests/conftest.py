"""Shared pytest hooks for the suite."""


def pytest_terminal_summary(terminalreporter):
    """Print one verdict line per acceptance criterion after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "GATE", None):
        return
    terminalreporter.section("acceptance gate")
    for num in sorted(mod.GATE):
        status, detail = mod.GATE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
