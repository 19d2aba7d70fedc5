"""Collects the per-criterion verdicts of the acceptance suite and prints them at the end of the run."""

from collections import OrderedDict

ACCEPTANCE = OrderedDict()


def record_criterion(number: int, check: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(number, []).append((check, bool(ok), detail))
    print(f"criterion {number} [{check}]: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {number}: {verdict}")
        for check, ok, detail in checks:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {check}: {detail}")
