import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from switchsched.heavy_traffic import (WeightedSpace, c_inner, c_norm, closed_form_2x2, heavy_traffic_limit,
                                       heavy_traffic_limit_c_weighted, matrix_limit, project_cone,
                                       project_cone_bruteforce, project_subspace, ssc_constants,
                                       ssc_diagnostic, universal_lower_bound, zeta_2x2, zeta_general)

C_T2 = np.array([[2.0, 10.0], [10.0, 2.0]])


def e(i, j, n=2):
    x = np.zeros((n, n))
    x[i, j] = 1
    return x


def test_c_inner_examples():
    assert c_inner(e(0, 0), e(0, 0), np.ones((2, 2))) == 1
    assert c_inner(e(0, 0), e(1, 1), np.ones((2, 2))) == 0
    assert c_inner(np.ones((2, 2)), np.ones((2, 2)), C_T2) == 24


@settings(max_examples=100, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-5, 5)), arrays(float, (3, 3), elements=st.floats(-5, 5)),
       arrays(float, (3, 3), elements=st.floats(0.1, 5)))
def test_c_inner_symmetric_bilinear_positive(x, y, c):
    assert abs(c_inner(x, y, c) - c_inner(y, x, c)) < 1e-9
    assert abs(c_inner(2 * x, y, c) - 2 * c_inner(x, y, c)) < 1e-8
    assert c_inner(x, x, c) >= 0


def test_basis_orthonormal_and_spans():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        c = rng.uniform(0.3, 4, (n, n))
        B = WeightedSpace(c).basis
        G = (B * c.reshape(-1)) @ B.T
        assert B.shape == (2 * n - 1, n * n)
        assert np.allclose(G, np.eye(2 * n - 1), atol=1e-12)
        w, wt = rng.normal(size=n), rng.normal(size=n)
        x = (w[:, None] + wt[None, :]) / c
        _, perp = project_subspace(x, c)
        assert np.abs(perp).max() < 1e-10


def test_projection_examples():
    c = np.ones((2, 2))
    _, perp = project_subspace(1 / C_T2, C_T2)  # w = 1, wt = 0
    assert np.abs(perp).max() < 1e-12
    par, _ = project_subspace(e(0, 0), c)
    assert abs(c_norm(par, c) ** 2 - 0.75) < 1e-12


def test_pythagoras_and_idempotence_random():
    rng = np.random.default_rng(1)
    c = rng.uniform(0.5, 5, (3, 3))
    for _ in range(200):
        x = rng.normal(size=(3, 3))
        par, perp = project_subspace(x, c)
        assert abs(c_inner(par, perp, c)) < 1e-10
        assert abs(c_norm(x, c) ** 2 - c_norm(par, c) ** 2 - c_norm(perp, c) ** 2) < 1e-10
        par2, _ = project_subspace(par, c)
        assert np.abs(par2 - par).max() < 1e-10


def test_cone_examples():
    c = np.ones((2, 2))
    _, perp = project_cone(np.full((2, 2), 3.0), c)
    assert np.abs(perp).max() < 1e-10
    x = -np.ones((2, 2))
    par, perp = project_cone(x, c)
    assert np.abs(par).max() < 1e-12 and np.allclose(perp, x)


def test_cone_against_bruteforce():
    rng = np.random.default_rng(2)
    for _ in range(100):
        c = rng.uniform(0.5, 5, (2, 2))
        x = rng.uniform(-1, 5, (2, 2))
        par, perp = project_cone(x, c)
        ref = project_cone_bruteforce(x, c)
        assert np.abs(par - ref).max() < 1e-8
        _, perp_s = project_subspace(x, c)
        assert c_norm(perp, c) >= c_norm(perp_s, c) - 1e-10


def test_cone_equals_subspace_when_unconstrained_nonnegative():
    c = np.array([[1.0, 2.0], [3.0, 1.5]])
    x = (np.array([2.0, 1.0])[:, None] + np.array([0.5, 1.0])[None, :]) / c + 1e-3 * np.array([[1, -1], [-1, 1]]) / c
    _, pk = project_cone(x, c)
    _, ps = project_subspace(x, c)
    assert abs(c_norm(pk, c) - c_norm(ps, c)) < 1e-10


def test_universal_lower_bound_examples():
    sig = np.full((2, 2), 0.2475)
    assert abs(universal_lower_bound(sig, 0.1, 2, np.ones((2, 2))) - 4.05) < 1e-12
    assert abs(universal_lower_bound(sig, 0.1, 2, 2 * np.ones((2, 2))) - 8.1) < 1e-12
    assert abs(universal_lower_bound(sig, 1 - 1e-12, 2, np.ones((2, 2))) - 0.99 / 2) < 1e-9
    with pytest.raises(ValueError):
        universal_lower_bound(sig, 0.0, 2, np.ones((2, 2)))


def test_zeta_unit_costs():
    assert np.allclose(zeta_2x2(np.ones((2, 2))), 0.75, atol=1e-14)
    assert np.allclose(zeta_general(np.ones((3, 3))), 5 / 9, atol=1e-12)
    assert np.allclose(zeta_general(np.ones((4, 4))), 7 / 16, atol=1e-12)


def test_zeta_two_methods_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c = rng.uniform(0.1, 10, (2, 2))
        z1, z2 = zeta_2x2(c), zeta_general(c)
        assert np.abs(z1 - z2).max() < 1e-12
        assert (z1 >= 0).all() and (z1 <= c + 1e-12).all()
    assert np.abs(zeta_2x2(C_T2) - zeta_general(C_T2)).max() < 1e-12
    assert abs(zeta_2x2(C_T2)[0, 0] - 11 / 6) < 1e-12


def test_zeta_scale_and_permutation_equivariance():
    rng = np.random.default_rng(4)
    c = rng.uniform(0.5, 3, (3, 3))
    assert np.allclose(zeta_general(2 * c), 2 * zeta_general(c))
    pr, pc = rng.permutation(3), rng.permutation(3)
    assert np.allclose(zeta_general(c[np.ix_(pr, pc)]), zeta_general(c)[np.ix_(pr, pc)])


def test_closed_form_is_scale_free_ratio():
    c = np.array([[1.0, 2.0], [3.0, 4.0]])
    s = np.full((2, 2), 0.25)
    assert np.isclose(closed_form_2x2(s, 2 * c), 2 * closed_form_2x2(s, c))


def test_limit_examples():
    sig = np.full((2, 2), 0.25)
    assert abs(heavy_traffic_limit(sig, np.ones((2, 2))) - 0.75) < 1e-12
    assert abs(closed_form_2x2(sig, np.ones((2, 2))) - 0.375) < 1e-12
    assert heavy_traffic_limit(np.zeros((2, 2)), C_T2) == 0
    assert matrix_limit(np.zeros((3, 3)), np.ones((3, 3))) == 0
    # unit costs: (1 - 1/(2n)) ||sigma||^2
    for n in (2, 3, 5):
        s = np.random.default_rng(n).uniform(0, 0.25, (n, n))
        assert abs(heavy_traffic_limit(s, np.ones((n, n))) - (1 - 1 / (2 * n)) * s.sum()) < 1e-12


def test_matrix_limit_agrees():
    rng = np.random.default_rng(5)
    lam = np.array([[0.7, 0.2], [0.29, 0.5]])
    s = lam * (1 - lam)
    assert abs(matrix_limit(s, C_T2) - heavy_traffic_limit(s, C_T2)) < 1e-9
    for n in (2, 3):
        for _ in range(20):
            c = rng.uniform(0.2, 6, (n, n))
            s = rng.uniform(0, 0.25, (n, n))
            assert abs(matrix_limit(s, c) - heavy_traffic_limit(s, c)) < 1e-9


def test_weighted_form_differs_for_nonuniform_costs():
    s = np.full((2, 2), 0.25)
    c = np.array([[1.0, 4.0], [4.0, 1.0]])
    assert heavy_traffic_limit_c_weighted(s, c) > 2 * heavy_traffic_limit(s, c)


def test_ssc_constants_and_diagnostic():
    nu = np.full((2, 2), 0.5)
    k = ssc_constants(nu, np.ones((2, 2)), 0.45 * np.ones((2, 2)), 0.2475 * np.ones((2, 2)), 1)
    assert k.eta == k.nu_c_min / 4 and k.D == 2
    assert k.M(1) > 0 and k.M(2) > 0
    rows = ssc_diagnostic({0.5: np.zeros((5, 2, 2)), 0.2: np.ones((3, 2, 2))}, np.ones((2, 2)))
    assert [r.eps for r in rows] == [0.5, 0.2]
    assert rows[0].mean_perp_cone == 0 and rows[1].mean_perp_cone < 1e-8
