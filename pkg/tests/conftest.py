import os

import pytest
from hypothesis import settings

from smlab.piecewise import parse_piecewise

settings.register_profile("default", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FOLD = "x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1"
BOUNCE = "all: 0.5*cos(x)+0.1"
HALO = "periodic=2*pi ; x<pi: 0.5*cos(x) ; else: 1.5+1.8*sin(x)"


@pytest.fixture(scope="session")
def fold():
    return parse_piecewise(FOLD)


@pytest.fixture(scope="session")
def bounce():
    return parse_piecewise(BOUNCE)


@pytest.fixture(scope="session")
def halo_f():
    return parse_piecewise(HALO)
