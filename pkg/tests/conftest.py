from __future__ import annotations

from collections import defaultdict

# criterion number -> list of (check name, passed, detail)
ACCEPTANCE: dict[int, list] = defaultdict(list)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(passed for _, passed, _ in checks)
        n_ok = sum(passed for _, passed, _ in checks)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} ({n_ok}/{len(checks)} checks)")
        for name, passed, detail in checks:
            terminalreporter.write_line(f"    [{'pass' if passed else 'FAIL'}] {name}: {detail}")
