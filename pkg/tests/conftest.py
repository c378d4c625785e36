import pytest

from safespeed import load_scenario, materialize
from safespeed.worlds import WORLDS


@pytest.fixture(scope="session")
def worlds_dir(tmp_path_factory):
    """All bundled worlds materialized once: name -> scenario file path."""
    root = tmp_path_factory.mktemp("worlds")
    return {name: materialize(name, root / name) for name in WORLDS}


@pytest.fixture(scope="session")
def scenario_for(worlds_dir):
    """Loader closure over the materialized worlds."""

    def load(name):
        return load_scenario(worlds_dir[name])

    return load
