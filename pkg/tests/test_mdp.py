import itertools
from fractions import Fraction

import numpy as np
import pytest

from switchsched.core import ArrivalProcess, SwitchConfig
from switchsched.mdp import (SCHEDULES, PolicyTable, TruncatedStateSpace, ValueFunction, bellman_iterate,
                             check_structure, discounted_value_of_policy, extract_switching_curve,
                             greedy_policy, stopping_threshold, value_iteration, verify_inequalities,
                             zero_value)

C_T2 = np.array([[2.0, 10.0], [10.0, 2.0]])


def cfg(lam=0.4, c=1.0):
    lam = np.broadcast_to(np.asarray(lam, float), (2, 2)).copy()
    return SwitchConfig(2, np.broadcast_to(np.asarray(c, float), (2, 2)).copy(), ArrivalProcess.bernoulli(lam))


def test_truncated_space():
    sp = TruncatedStateSpace(5, 1)
    assert sp.shape == (6,) * 4 and sp.safe_max == 4
    assert sp.frontier_mask().sum() == 6 ** 4 - 5 ** 4
    with pytest.raises(ValueError):
        TruncatedStateSpace(1, 1)
    with pytest.raises(ValueError):
        zero_value(cfg(), 0.9, 1)


def test_v1_is_max_reward():
    V, _ = value_iteration(cfg(), 0.9, 6, max_k=1)
    assert V(np.ones(4, int)) == 2
    assert V((0, 0, 0, 0)) == 0
    assert V((3, 0, 0, 0)) == 1
    assert V((0, 2, 0, 5)) == 1
    assert V((1, 1, 0, 0)) == 1
    Vc, _ = value_iteration(cfg(c=C_T2), 0.9, 6, max_k=1)
    assert Vc((1, 1, 1, 1)) == 20 and Vc((1, 0, 0, 1)) == 4 and Vc((1, 1, 0, 0)) == 10


def test_contraction_and_monotone_in_k():
    V, _ = value_iteration(cfg(0.45), 0.9, 8, max_k=30)
    d = np.array(V.deltas)
    assert (d[1:] <= 0.9 * d[:-1] + 1e-12).all()
    V5, _ = value_iteration(cfg(0.45), 0.9, 8, max_k=5)
    V6 = bellman_iterate(V5)
    assert (V6.values >= V5.values - 1e-12).all()


def test_value_monotone_in_queue_lengths():
    V, _ = value_iteration(cfg(0.4), 0.9, 8, max_k=20)
    for ax in range(4):
        assert (np.diff(V.values, axis=ax) >= -1e-12).all()


def test_stopping_threshold():
    assert abs(stopping_threshold(1.0, 0.99) - 5.102e-5) < 1e-8
    assert stopping_threshold(2.0, 0.5) == pytest.approx(1.0)


def test_convergence_modes():
    V, _ = value_iteration(cfg(0.3), 0.5, 5, tol=1e-8)
    assert V.converged and V.deltas[-1] < 1e-8
    V2, _ = value_iteration(cfg(0.3), 0.5, 5, max_k=3, tol=1e-12)
    assert V2.k == 3 and not V2.converged
    with pytest.raises(ValueError):
        value_iteration(cfg(0.3), 0.5, 5)


def test_lipschitz_margin_at_k0():
    V = zero_value(cfg(c=C_T2), 0.9, 5)
    rep = verify_inequalities(V)
    assert rep.passed
    assert rep["lipschitz"].worst_margin == 2.0  # min c_ij, tight at V = 0


def test_inequalities_small_grid():
    for k in (1, 3, 40):
        V, _ = value_iteration(cfg(0.45), 0.95, 10, max_k=k)
        rep = verify_inequalities(V)
        assert rep.passed, rep.table()
        assert rep["cost_order"].skipped is None


def test_cost_order_gated():
    V, _ = value_iteration(cfg(0.3, c=[[1.0, 5.0], [5.0, 1.0]]), 0.9, 6, max_k=2)
    rep = verify_inequalities(V)
    assert rep["cost_order"].skipped is not None and rep["cost_order"].checked == 0


def test_corrupted_value_is_caught():
    V, _ = value_iteration(cfg(0.4), 0.9, 8, max_k=10)
    bad = V.values.copy()
    bad[2, 2, 2, 2] += 5.0
    rep = verify_inequalities(ValueFunction(bad, V.beta, V.k, V.space, V.costs, V.arrivals))
    assert not rep.passed
    states = [tuple(x["state"]) for r in rep.results for x in r.counterexamples]
    assert states


def test_exact_rational_agrees_with_float():
    c = cfg(Fraction(2, 5), c=[[1.0, 2.0], [3.0, 1.0]])
    Vx, px = value_iteration(c, 0.9, 4, max_k=4, exact=True)
    Vf, pf = value_iteration(c, 0.9, 4, max_k=4)
    assert Vx.exact and isinstance(Vx.values.flat[5], Fraction)
    assert np.abs(Vx.values.astype(float) - Vf.values).max() < 1e-9
    assert verify_inequalities(Vx).passed
    assert (px.action == pf.action).all()


def test_save_load_roundtrip(tmp_path):
    V, pol = value_iteration(cfg(0.35, c=C_T2), 0.9, 6, max_k=7)
    V.save(tmp_path / "v.npz")
    W = ValueFunction.load(tmp_path / "v.npz")
    assert W.k == 7 and W.beta == 0.9 and np.array_equal(W.values, V.values)
    assert np.array_equal(W.costs, V.costs) and np.allclose(W.arrivals.pmf, V.arrivals.pmf)
    pol.save(tmp_path / "p.npz")
    P = PolicyTable.load(tmp_path / "p.npz")
    assert np.array_equal(P.action, pol.action) and np.array_equal(P.optimal, pol.optimal)
    Vx, _ = value_iteration(cfg(0.25), 0.5, 3, max_k=2, exact=True)
    Vx.save(tmp_path / "x.npz")
    assert (ValueFunction.load(tmp_path / "x.npz").values == Vx.values).all()
    with pytest.raises(ValueError):
        ValueFunction.load(tmp_path / "p.npz")


def test_zero_arrival_policy_values():
    c = cfg(0.0)
    _, pol = value_iteration(c, 0.9, 5, max_k=3)
    assert discounted_value_of_policy(pol, (0, 0, 0, 0)) == pytest.approx(0, abs=1e-8)
    assert discounted_value_of_policy(pol, (1, 0, 0, 0)) == pytest.approx(1, abs=1e-8)
    assert discounted_value_of_policy(pol, (1, 1, 0, 0)) == pytest.approx(2 + 0.9, abs=1e-8)  # q11, q12 conflict
    assert discounted_value_of_policy(pol, (1, 0, 0, 1)) == pytest.approx(2, abs=1e-8)


def _bruteforce_min_cost(q, beta, steps):
    """Finite-horizon drain cost with zero arrivals, by enumeration of schedule sequences."""
    best = np.inf
    for seq in itertools.product((0, 1), repeat=steps):
        x, tot = np.array(q), 0.0
        for t, s in enumerate(seq):
            tot += beta ** t * x.sum()
            x = np.maximum(x - SCHEDULES[s], 0)
        tot += beta ** steps * x.sum() / (1 - beta)
        best = min(best, tot)
    return best


def test_zero_arrival_policy_matches_bruteforce():
    beta = 0.9
    _, pol = value_iteration(cfg(0.0), beta, 5, tol=1e-12)
    for q in [(1, 0, 0, 0), (2, 1, 0, 0), (1, 1, 1, 1), (3, 0, 1, 2), (2, 2, 0, 1)]:
        assert discounted_value_of_policy(pol, q) == pytest.approx(_bruteforce_min_cost(q, beta, 6), abs=1e-6)


def test_structure_and_curve():
    V, pol = value_iteration(cfg(0.4), 0.95, 10, max_k=60)
    st = check_structure(pol)
    assert st.passed and st.trivial_checked > 0 and st.s1_checked > 0
    curve = extract_switching_curve(pol)
    assert not curve.violations
    # unit costs, symmetric arrivals: serve the longer singleton
    assert curve.threshold(0, (0, 3, 0, 0)) == 3
    assert curve.threshold(0, (5, 0, 2, 0)) == 2
    assert len(curve.to_rows()) == len(curve.thresholds)


def test_greedy_policy_generates_next_iterate():
    V, _ = value_iteration(cfg(0.4, c=[[1.0, 2.0], [3.0, 1.0]]), 0.9, 6, max_k=4)
    pol = greedy_policy(V)
    nxt = bellman_iterate(V)
    from switchsched.mdp import action_scores
    sc = action_scores(V.values, V.beta, V.costs, V.arrivals, 6)
    chosen = np.where(pol.action == 0, sc[0], sc[1])
    assert np.allclose(chosen, nxt.values)
