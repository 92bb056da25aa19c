import os

import pytest

from gaussian_sectors.ideal_stream import enumerate_weighted_terms
from gaussian_sectors.predictions import build_constants
from gaussian_sectors.windows import get_pair


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GS_STRETCH") == "1":
        return
    skip = pytest.mark.skip(reason="stretch run; set GS_STRETCH=1")
    for item in items:
        if "stretch" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def indicator():
    return get_pair("indicator")


@pytest.fixture(scope="session")
def bump():
    return get_pair("bump")


@pytest.fixture(scope="session")
def indicator_constants(indicator):
    return build_constants(indicator)


@pytest.fixture(scope="session")
def bump_constants(bump):
    return build_constants(bump)


@pytest.fixture(scope="session")
def terms_1e4():
    return enumerate_weighted_terms(10_000)
