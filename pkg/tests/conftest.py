import logging

import pytest
from hypothesis import HealthCheck, settings

from ctiscout.embedding import MockBackend

# property tests spawn threads and hash many tokens; wall-clock deadlines
# only add flakiness on loaded CI machines
settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

logging.getLogger("ctiscout").setLevel(logging.WARNING)


@pytest.fixture(scope="session")
def backend() -> MockBackend:
    return MockBackend(seed=0, dim=64)


@pytest.fixture(scope="session")
def wide_backend() -> MockBackend:
    return MockBackend(seed=0, dim=256)
