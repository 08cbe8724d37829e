import os
import pathlib

import pytest

ROOT = pathlib.Path(os.environ.get("AOT_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


@pytest.fixture
def root():
    return ROOT


@pytest.fixture
def cli():
    path = os.environ.get("AOT_CLI")
    if not path:
        pytest.skip("AOT_CLI not set")
    return path
