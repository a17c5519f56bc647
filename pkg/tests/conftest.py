import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "tests"))

from congra.grammar import GrammarSource, load_grammar  # noqa: E402
from congra.world import load_world  # noqa: E402


def load_fixture_grammar():
    files = sorted((REPO / "grammar").glob("*.cg"))
    return load_grammar([GrammarSource(p.name, p.read_text()) for p in files])


@pytest.fixture(scope="session")
def grammar():
    return load_fixture_grammar()


@pytest.fixture(scope="session")
def repo():
    return REPO


def world_named(name, grammar):
    return load_world((REPO / "worlds" / f"{name}.json").read_text(), grammar)


@pytest.fixture()
def kitchen(grammar):
    return world_named("kitchen", grammar)


@pytest.fixture()
def kitchen_empty(grammar):
    return world_named("kitchen_empty_counter", grammar)


@pytest.fixture()
def lab(grammar):
    return world_named("lab", grammar)


@pytest.fixture()
def lab_two_blue(grammar):
    return world_named("lab_two_blue", grammar)
