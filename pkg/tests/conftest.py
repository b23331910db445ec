import numpy as np
import pytest

import acceptance_log
from causal_audit import cli, tables


@pytest.fixture(scope="session")
def berkeley():
    return cli.load_table(None, {"sex": {"male": 0, "female": 1},
                                 "admitted": {"no": 0, "yes": 1}})


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(acceptance_log.RESULTS)):
            terminalreporter.write_line(line)
