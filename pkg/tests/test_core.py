import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchsched.core import (Admissibility, ArrivalProcess, Schedule, SwitchConfig, check_admissible_rates,
                              discounted_horizon, enumerate_schedules, reward, sample_arrivals, step,
                              unused_service)

DIAG = Schedule((0, 1))
ANTI = Schedule((1, 0))


def test_enumerate_counts_and_order():
    assert len(enumerate_schedules(2)) == 2
    assert len(enumerate_schedules(3)) == 6
    assert enumerate_schedules(2)[0] == DIAG
    assert enumerate_schedules(2)[1] == ANTI
    for n in range(2, 6):
        scheds = enumerate_schedules(n)
        assert len(scheds) == math.factorial(n)
        for s in scheds:
            m = s.matrix
            assert (m.sum(0) == 1).all() and (m.sum(1) == 1).all()


@pytest.mark.parametrize("n", [1, 9, 0])
def test_enumerate_rejects_out_of_range(n):
    with pytest.raises(ValueError):
        enumerate_schedules(n)


def test_step_examples():
    assert step([[1, 0], [0, 2]], DIAG, np.zeros((2, 2), int)).tolist() == [[0, 0], [0, 1]]
    assert step([[0, 0], [0, 0]], DIAG, np.ones((2, 2), int)).tolist() == [[1, 1], [1, 1]]
    assert step([[0, 3], [2, 0]], DIAG, np.zeros((2, 2), int)).tolist() == [[0, 3], [2, 0]]


def test_reward_examples():
    c = np.array([[2, 10], [10, 2]])
    assert reward([[0, 2], [3, 0]], ANTI, c) == 20
    assert reward([[0, 2], [3, 0]], DIAG, c) == 0
    for s in (DIAG, ANTI):
        assert reward(np.ones((2, 2)), s, np.ones((2, 2))) == 2
        assert reward(np.zeros((2, 2)), s, c) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 4), st.data())
def test_dynamics_nonnegative_and_conserving(n, data):
    q = np.array(data.draw(st.lists(st.integers(0, 3), min_size=n * n, max_size=n * n))).reshape(n, n)
    a = np.array(data.draw(st.lists(st.integers(0, 2), min_size=n * n, max_size=n * n))).reshape(n, n)
    s = enumerate_schedules(n)[data.draw(st.integers(0, math.factorial(n) - 1))]
    q2 = step(q, s, a)
    assert (q2 >= 0).all()
    served = int((s.matrix * (q > 0)).sum())
    assert q2.sum() == q.sum() + a.sum() - served
    assert unused_service(q, s).sum() == n - served


def test_sample_arrivals_degenerate_and_mean():
    rng = np.random.default_rng(0)
    assert (sample_arrivals(ArrivalProcess.uniform_bernoulli(2, 0.0), rng) == 0).all()
    assert (sample_arrivals(ArrivalProcess.uniform_bernoulli(2, 1.0), rng) == 1).all()
    draws = sample_arrivals(ArrivalProcess.uniform_bernoulli(2, 0.45), np.random.default_rng(7), size=250_000)
    assert abs(draws.mean() - 0.45) < 0.002  # 10^6 queue draws


def test_sample_arrivals_deterministic():
    p = ArrivalProcess.uniform_bernoulli(3, 0.3)
    a = sample_arrivals(p, np.random.default_rng(5), size=10)
    b = sample_arrivals(p, np.random.default_rng(5), size=10)
    assert np.array_equal(a, b)


def test_general_pmf_moments():
    pmf = np.broadcast_to(np.array([0.5, 0.2, 0.3]), (2, 2, 3)).copy()
    p = ArrivalProcess(pmf)
    assert p.a_max == 2
    assert np.allclose(p.mean, 0.8)
    assert np.allclose(p.var, 0.2 + 1.2 - 0.64)
    draws = sample_arrivals(p, np.random.default_rng(1), size=100_000)
    assert set(np.unique(draws)) <= {0, 1, 2}
    assert abs(draws.mean() - 0.8) < 0.01


def test_arrival_validation():
    with pytest.raises(ValueError):
        ArrivalProcess(np.full((2, 2, 2), 0.6))
    with pytest.raises(ValueError):
        ArrivalProcess.bernoulli([[1.2, 0], [0, 0]])
    with pytest.raises(ValueError):
        SwitchConfig(2, np.array([[1, 0], [1, 1.0]]), ArrivalProcess.uniform_bernoulli(2, 0.1))
    with pytest.raises(ValueError):
        SwitchConfig(3, np.ones((2, 2)), ArrivalProcess.uniform_bernoulli(2, 0.1))


def test_check_admissible_rates():
    r = check_admissible_rates(np.full((2, 2), 0.45))
    assert r.status == Admissibility.STABLE and np.allclose(r.row_loads, 0.9)
    assert check_admissible_rates(np.full((2, 2), 0.5)).status == Admissibility.CRITICAL
    assert check_admissible_rates(np.full((2, 2), 0.6)).status == Admissibility.OVERLOADED
    r = check_admissible_rates([[0.7, 0.2], [0.29, 0.5]])
    assert r.status == Admissibility.STABLE and abs(r.max_load - 0.99) < 1e-12
    with pytest.raises(ValueError):
        check_admissible_rates([[-0.1, 0], [0, 0]])


def test_discounted_horizon():
    assert discounted_horizon(0.99) == 1146
    T = discounted_horizon(0.9)
    assert 0.9 ** T <= 1e-3 * 0.1 < 0.9 ** (T - 1)
