import itertools

import pytest

from balance_qubo import DataBudget, paper_instance

# Reference two-segment table, typed in independently of the package: (label, vmaf, data_mb).
TABLE1 = [
    [("1080p", 92.90, 8.17), ("720p", 90.58, 5.46), ("480p", 87.13, 2.68), ("360p", 84.65, 0.96)],
    [("1080p", 95.69, 12.09), ("720p", 94.96, 7.76), ("480p", 93.14, 4.06), ("360p", 89.03, 1.63)],
]


def brute_force_mckp(rows, cap):
    """Reference MCKP by plain enumeration; returns (choices, vmaf, data) or None."""
    best = None
    for combo in itertools.product(*(range(len(r)) for r in rows)):
        v = sum(rows[i][j][1] for i, j in enumerate(combo))
        d = sum(rows[i][j][2] for i, j in enumerate(combo))
        if d <= cap + 1e-9 and (best is None or v > best[1] + 1e-9):
            best = (combo, v, d)
    return best


@pytest.fixture
def ref_table():
    return paper_instance()


@pytest.fixture
def budget10():
    return DataBudget(10.0)


# Lines appended by the acceptance suite, echoed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
