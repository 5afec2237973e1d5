import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qdesim import fixtures  # noqa: E402
from qdesim.analysis import cluster_gstg  # noqa: E402
from qdesim.sim import SimConfig, build_stg  # noqa: E402


@pytest.fixture(scope="session")
def naive():
    return fixtures.load("naive")


@pytest.fixture(scope="session")
def fishery():
    return fixtures.load("fishery")


@pytest.fixture(scope="session")
def naive_stg(naive):
    return build_stg(naive)


@pytest.fixture(scope="session")
def fishery_stg(fishery):
    return build_stg(fishery)


@pytest.fixture(scope="session")
def naive_gstg(naive_stg, naive):
    return cluster_gstg(naive_stg, naive.relevant)


@pytest.fixture(scope="session")
def fishery_gstg(fishery_stg, fishery):
    return cluster_gstg(fishery_stg, fishery.relevant)


@pytest.fixture(scope="session")
def naive_full(naive):
    return build_stg(naive, SimConfig(full_envisionment=True))
