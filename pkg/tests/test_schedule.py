import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from earl.schedule import TemperatureSchedule, schedule_step


def test_constant():
    s = TemperatureSchedule.constant(0.1)
    assert [s.step() for _ in range(3)] == [0.1, 0.1, 0.1]


def test_exponential_values():
    s = TemperatureSchedule.exponential(1.0, 0.99)
    assert s.value(0) == 1.0
    assert s.value(100) == pytest.approx(0.36603, abs=1e-5)
    assert schedule_step(s) == 1.0 and s.k == 1


def test_steps_below():
    s = TemperatureSchedule.exponential(0.05, 0.99)
    k = s.steps_below(0.005)
    assert k == 230
    assert s.value(k) < 0.005 <= s.value(k - 1)
    assert TemperatureSchedule.constant(0.001).steps_below(0.01) == 0
    with pytest.raises(ValueError):
        TemperatureSchedule.constant(0.1).steps_below(0.01)


@pytest.mark.parametrize("kwargs", [
    dict(kind="linear"), dict(alpha0=-0.1), dict(alpha0=math.nan), dict(decay_rate=0.0), dict(decay_rate=1.5),
])
def test_validation(kwargs):
    with pytest.raises(ValueError):
        TemperatureSchedule(**kwargs)


@given(st.floats(0.001, 10), st.floats(0.5, 0.999), st.integers(0, 500))
def test_monotone_non_increasing(alpha0, rate, k):
    s = TemperatureSchedule.exponential(alpha0, rate)
    assert 0 <= s.value(k + 1) <= s.value(k) <= alpha0
