import numpy as np
import pytest

from junction_readout.circuit import CircuitParams
from junction_readout.semiclassical import KerrSystem


@pytest.fixture(scope="session")
def params():
    return CircuitParams()


@pytest.fixture(scope="session")
def kerr():
    """Readout resonator with chi = -7 MHz, kappa = 10.6 MHz, K = -0.963 MHz."""
    return KerrSystem.from_chi(7.659e9, -7e6, 10.6e6, -0.963e6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
