import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402


@pytest.fixture(scope="session")
def wz_zno():
    return helpers.wz_zno()


@pytest.fixture(scope="session")
def rs_zno():
    return helpers.rs_zno()


@pytest.fixture(scope="session")
def wz_gan():
    return helpers.wz_gan()


@pytest.fixture(scope="session")
def bi2te3():
    return helpers.bi2te3()


@pytest.fixture(scope="session")
def wz_supercell(wz_zno):
    from xtalmet import make_supercell

    return make_supercell(wz_zno, 2, 2, 2)
