import pytest

from pcsracing.race_harness import RacePools

from .factories import fast_settings, make_arena, make_collection, make_sets, ring_track, stadium_track


@pytest.fixture(scope="session")
def ring():
    return ring_track()


@pytest.fixture(scope="session")
def stadium():
    return stadium_track()


@pytest.fixture
def settings():
    return fast_settings()


@pytest.fixture
def ring_arena(ring, settings):
    return make_arena(ring, settings)


@pytest.fixture
def stadium_arena(stadium, settings):
    return make_arena(stadium, settings)


@pytest.fixture
def collection():
    return make_collection(12, seed=3)


@pytest.fixture
def pools(collection):
    return RacePools(sets=make_sets(collection))
