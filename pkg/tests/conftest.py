import pytest

from satforge.minidata import build_mini_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """One shared synthetic corpus; commands under test must not mutate it."""
    root = tmp_path_factory.mktemp("corpus")
    return build_mini_corpus(root, seed=7)
