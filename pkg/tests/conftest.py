import os

import pytest

from si_lab.harness import run
from si_lab.parser import load_history

from .helpers import small_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(ROOT, "data")


@pytest.fixture
def data_path():
    def resolve(*parts: str) -> str:
        return os.path.join(DATA_DIR, *parts)
    return resolve


@pytest.fixture
def si_not_session_si(data_path):
    return load_history(data_path("histories", "si_not_session_si.jsonl"))


@pytest.fixture
def realtime_not_strong_si(data_path):
    return load_history(data_path("histories", "realtime_not_strong_si.jsonl"))


@pytest.fixture(scope="session")
def wt_history():
    return run(small_config("wt"))


@pytest.fixture(scope="session")
def rs_history():
    return run(small_config("rs"))


@pytest.fixture(scope="session")
def sc_history():
    return run(small_config("sc", shard_count=2, mongos_count=2))


@pytest.fixture(scope="session")
def engine_histories(wt_history, rs_history, sc_history):
    return {"wt": wt_history, "rs": rs_history, "sc": sc_history}
