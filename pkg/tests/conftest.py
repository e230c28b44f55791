import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pathindep import fields as F

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def wavy_field(base=0.6, amp=0.2, drift=0.1):
    """v = base + amp sin(x1) cos(x2) - drift t, with analytic derivatives."""

    def value(t, x):
        x = np.asarray(x, dtype=float)
        return base + amp * np.sin(x[..., 0]) * np.cos(x[..., 1]) - drift * t

    def grad(t, x):
        return amp * np.array([np.cos(x[0]) * np.cos(x[1]), -np.sin(x[0]) * np.sin(x[1])])

    def hess(t, x):
        s1, c1, s2, c2 = np.sin(x[0]), np.cos(x[0]), np.sin(x[1]), np.cos(x[1])
        return amp * np.array([[-s1 * c2, -c1 * s2], [-c1 * s2, -s1 * c2]])

    return F.ScalarField(value, lambda t, x: -drift, grad, hess, name="wavy")


@pytest.fixture
def wavy():
    return wavy_field()


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
