import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from earl.envs import random_mdp
from earl.mdp import TabularMDP, TabularPolicy

settings.register_profile("earl", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("earl")


def single_state(r=1.0, gamma=0.9, n_actions=1):
    return TabularMDP(np.ones((1, n_actions, 1)), np.full((1, n_actions), r), gamma)


@pytest.fixture
def mdp5():
    return random_mdp(3, 5, 3, 0.9)


@pytest.fixture
def policy5():
    return TabularPolicy.random(5, 3, np.random.default_rng(11))


# hypothesis strategy for a small random MDP plus policy, driven by a seed
mdp_cases = st.builds(
    lambda seed, s, a, g: (random_mdp(seed, s, a, g),
                           TabularPolicy.random(s, a, np.random.default_rng(seed + 1))),
    st.integers(0, 10**6), st.integers(1, 8), st.integers(1, 4), st.sampled_from([0.0, 0.5, 0.9, 0.99]),
)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(number, passed, text):
    ACCEPTANCE[number] = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {text}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
