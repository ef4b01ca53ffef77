import pytest

from pushtrack.contacts import derive_contacts
from pushtrack.mobility import SyntheticConfig, generate_synthetic

SPARSE = SyntheticConfig(arrival_rate=0.02, mean_transit=400, initial_nodes=8, horizon=1200)
SMALL_DENSE = SyntheticConfig(arrival_rate=0.1, mean_transit=600, initial_nodes=60, horizon=1200)


@pytest.fixture(scope="session")
def sparse():
    tr = generate_synthetic(SPARSE, 3)
    return tr, derive_contacts(tr)


@pytest.fixture(scope="session")
def small_dense():
    tr = generate_synthetic(SMALL_DENSE, 5)
    return tr, derive_contacts(tr)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
