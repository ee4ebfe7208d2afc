import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from shopbench import instance as im

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def ft06_text():
    with open(os.path.join(DATA, "ft06.txt"), encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def ft06(ft06_text):
    return im.load_orlib(ft06_text)
