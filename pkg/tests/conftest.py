import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from conic_lens.boundary import Circle, Sphere, Torus
from conic_lens.geometry import ExactCone, PerturbedConic, WarpedProduct
from conic_lens.profiles import RadialProfile

settings.register_profile("suite", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

# criterion lines printed at the end of the run
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cone():
    return ExactCone(Circle())


@pytest.fixture(scope="session")
def plane():
    return WarpedProduct.build("circle", RadialProfile.euclidean())


@pytest.fixture(scope="session")
def warped2():
    return WarpedProduct.build("circle", RadialProfile(2.0, 1.0, 2.0))


@pytest.fixture(scope="session")
def perturbed_circle():
    return PerturbedConic(Circle(), [(1, 0.5, [([(1.0, [0]), (0.5, [1], 0.3)], "h0")])])


@pytest.fixture(scope="session")
def perturbed_sphere():
    return PerturbedConic(Sphere(), [(1, 0.4, [([(1.0, [0, 0]), (0.4, [1, 1], 0.2)], "h0")])])


@pytest.fixture(scope="session")
def torus():
    return Torus((2 * np.pi, 2 * np.pi))
