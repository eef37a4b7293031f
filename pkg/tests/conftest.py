import pytest

from latvar.events import default_catalog


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()
