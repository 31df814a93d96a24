from math import pi

import pytest

from boltzcheck import quadrature as quad
from boltzcheck.functions import gaussian, maxwellian
from boltzcheck.kernel import KernelParams

# lighter than the default rule; enough for sign and identity tests
LIGHT = quad.QuadratureSpec(nodes_per_cell=3, angular_nodes=16, theta_min=pi / 2 * 2.0**-4, dyadic_depth=5)


@pytest.fixture
def light():
    return LIGHT


@pytest.fixture
def params2():
    return KernelParams(2, 0.0, 0.5)


@pytest.fixture
def mu2():
    return maxwellian(n=2)


@pytest.fixture
def probe2():
    return gaussian(2, center=[0.3, 0.1, 0.0])


@pytest.fixture
def partner2():
    return gaussian(2, center=[-0.2, 0.4, 0.0], beta=0.7)
