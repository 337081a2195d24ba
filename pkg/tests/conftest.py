import copy

import pytest

from emfson.config import preset
from emfson.netmodel import build_layout


@pytest.fixture(scope="session")
def desk_cfg_session():
    return preset("desk")


@pytest.fixture
def desk_cfg(desk_cfg_session):
    return copy.deepcopy(desk_cfg_session)


@pytest.fixture(scope="session")
def desk_layout(desk_cfg_session):
    return build_layout(desk_cfg_session.deployment)


@pytest.fixture(scope="session")
def table1_layout():
    return build_layout(preset("table1").deployment)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
