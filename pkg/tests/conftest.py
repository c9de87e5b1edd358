import numpy as np
import pytest

from phaseminmax.geometry import ScalarField, TorusDomain
from phaseminmax.potential import DoubleWell

SQRT2 = np.sqrt(2.0)


@pytest.fixture(scope="session")
def well():
    return DoubleWell()


def tanh_kink(s):
    """Closed-form heteroclinic for the quartic well."""
    return np.tanh(np.asarray(s) / SQRT2)


def kink_distance(x, L: float, left: float, right: float):
    """Signed periodic distance to {left, right}, positive on the arc (left, right)."""
    p = np.mod(x - left, L)
    w = np.mod(right - left, L)
    return np.where(p < w, np.minimum(p, w - p), -np.minimum(p - w, L - p))


def two_kink(domain: TorusDomain, eps: float, left: float, right: float) -> ScalarField:
    """+1 on (left, right), -1 outside, with the closed-form profile across each transition."""
    x = domain.mesh()[0]
    return ScalarField(domain, tanh_kink(kink_distance(x, domain.lengths[0], left, right) / eps))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One verdict line per acceptance criterion, echoed again at the end of the session.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
