from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from nudgemdp.core import UserParams, WorldParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def _report(criterion: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")

    return _report


def exact_v_right(theta: UserParams, delta: int) -> Fraction:
    """Value of always acting, by backward recursion in exact rationals.

    V(1) = (pG + B)/z and V(k) = (B + gamma p V(k-1))/z.  This never touches
    the geometric-series form the package uses.
    """
    g, p = Fraction(theta.gamma_user), Fraction(theta.p_user)
    B, G = Fraction(theta.burden), Fraction(theta.goal_reward)
    z = 1 - g * (1 - p)
    v = (p * G + B) / z
    for _ in range(delta - 1):
        v = (B + g * p * v) / z
    return v


def exact_v_stay(theta: UserParams, d: float) -> Fraction:
    g, d, D = Fraction(theta.gamma_user), Fraction(d), Fraction(theta.disengage_reward)
    return d * D / (1 - g * (1 - d))


unit = st.floats(0.0, 0.99, allow_nan=False)
users = st.builds(
    UserParams,
    burden=st.floats(-5.0, -0.1),
    goal_reward=st.just(10.0),
    disengage_reward=st.floats(-5.0, 5.0),
    p_user=unit,
    gamma_user=unit,
)
worlds = st.builds(
    WorldParams,
    n_states=st.integers(2, 12),
    p_world=st.floats(0.05, 1.0),
    d_world=st.floats(0.05, 1.0),
    sigma2=st.floats(0.0, 1.0),
)
# users whose belief survives gamma being pushed to 1 without z underflowing
shiftable_users = users.filter(lambda t: t.p_user > 1e-9)
