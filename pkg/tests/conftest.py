import numpy as np
import pytest

from focus_unet.tensor import precision


@pytest.fixture
def f64():
    """Gradient-check mode: everything in this test runs in float64."""
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
