from collections import defaultdict

import pytest

_CHECKS = defaultdict(list)

CRITERIA = {
    1: "complete-graph aggregate comparison, I(0) = n",
    2: "line and star error tables",
    3: "complete-graph error table, selected cells",
    4: "chain against dense matrix exponential",
    5: "mean field bounds the exact marginals",
    6: "invariant suite",
    7: "certificates predict decay and growth",
    8: "stochastic ensembles",
    9: "determinism",
}


@pytest.fixture
def check():
    """Record one acceptance check; returns ``ok`` so tests can assert on it."""
    def record(criterion: int, label: str, ok: bool, detail: str = "") -> bool:
        _CHECKS[criterion].append((label, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CHECKS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CHECKS):
        rows = _CHECKS[k]
        failed = [r for r in rows if not r[1]]
        status = "PASS" if not failed else "FAIL"
        terminalreporter.write_line(
            f"criterion {k} {status}: {CRITERIA.get(k, '')} ({len(rows) - len(failed)}/{len(rows)} checks)")
        for label, _, detail in failed:
            terminalreporter.write_line(f"    failed {label}: {detail}")
