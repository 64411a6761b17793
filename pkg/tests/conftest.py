import numpy as np
import pytest

from vos_timing.charlib import CharEntry, CharLib, default_charlib
from vos_timing.fixtures import load_fixture
from vos_timing.timedist import DEFAULT_GRID


@pytest.fixture(scope="session")
def lib():
    return default_charlib()


@pytest.fixture(scope="session")
def cfg():
    return DEFAULT_GRID


@pytest.fixture(scope="session")
def fixtures():
    return {name: load_fixture(name) for name in ("fig1_xor2", "adder2", "adder4", "adder8", "dft2")}


def sharp_lib(lib: CharLib, sigma: float = 1e-4) -> CharLib:
    """Same means, nearly zero spread."""
    return CharLib({(k, tr, v): CharEntry(e.mu, sigma) for (k, tr, v), e in lib.items()})


@pytest.fixture(scope="session")
def sharp(lib):
    return sharp_lib(lib)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
