"""Weighted-inner-product geometry and heavy-traffic predictions.

The subspace S_c holds matrices x with x_ij = (w_i + wt_j) / c_ij and the cone
K_c is the part with w, wt >= 0. Everything is computed on row-major
flattened n*n vectors with inner product <x, y>_c = sum c_ij x_ij y_ij.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import nnls


def _flat(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1)


def c_inner(x, y, c) -> float:
    return float(np.sum(_flat(c) * _flat(x) * _flat(y)))


def c_norm(x, c) -> float:
    return float(np.sqrt(c_inner(x, x, c)))


def _check_costs(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
        raise ValueError("cost matrix must be square with n >= 2")
    if not (c > 0).all():
        raise ValueError("costs must be strictly positive")
    return c


def spanning_vectors(c) -> np.ndarray:
    """Rows e^(1)_c..e^(n)_c then columns et^(1)_c..et^(n)_c, shape (2n, n*n)."""
    c = _check_costs(c)
    n = c.shape[0]
    out = np.zeros((2 * n, n, n))
    for i in range(n):
        out[i, i, :] = 1.0 / c[i, :]
        out[n + i, :, i] = 1.0 / c[:, i]
    return out.reshape(2 * n, n * n)


@dataclass(frozen=True)
class WeightedSpace:
    """S_c with a c-orthonormal basis built by Gram-Schmidt with one re-orthogonalisation pass."""
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _check_costs(self.c))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @cached_property
    def basis(self) -> np.ndarray:
        n = self.n
        cf = self.c.reshape(-1)
        span = spanning_vectors(self.c)[: 2 * n - 1]  # et^(n) is dependent on the rest
        basis = []
        for v in span:
            u = v.copy()
            for _ in range(2):
                for f in basis:
                    u -= np.sum(cf * u * f) * f
            nrm = np.sqrt(np.sum(cf * u * u))
            if nrm < 1e-10 * np.sqrt(np.sum(cf * v * v)):
                raise ValueError(f"rank deficiency in S_c spanning set for c={self.c.tolist()}")
            basis.append(u / nrm)
        return np.array(basis)

    def inner(self, x, y) -> float:
        return c_inner(x, y, self.c)

    def project(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        xf = x.reshape(-1)
        cf = self.c.reshape(-1)
        coef = self.basis @ (cf * xf)
        par = (coef @ self.basis).reshape(x.shape)
        return par, x - par


def project_subspace(x, c) -> tuple[np.ndarray, np.ndarray]:
    return WeightedSpace(np.asarray(c, dtype=float)).project(x)


def project_cone(x, c, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Nearest point of K_c to x in the c-norm, via nonnegative least squares on (w, wt)."""
    c = _check_costs(c)
    x = np.asarray(x, dtype=float)
    sq = np.sqrt(c.reshape(-1))
    A = (spanning_vectors(c) * sq).T  # columns = sqrt(c)-scaled generators
    b = sq * x.reshape(-1)
    try:
        z, _ = nnls(A, b, maxiter=50 * A.shape[1])
    except RuntimeError as exc:  # scipy raises on iteration limit
        raise RuntimeError(f"cone projection did not converge for x={x.tolist()}") from exc
    par = (spanning_vectors(c).T @ z).reshape(x.shape)
    # KKT: gradient A^T(Az - b) >= 0 with complementary slackness
    g = A.T @ (A @ z - b)
    scale = max(1.0, np.abs(b).max())
    if g.min() < -1e-8 * scale or np.abs(g[z > 0]).max(initial=0.0) > 1e-8 * scale:
        raise RuntimeError(f"cone projection KKT residual too large: {g.tolist()}")
    return par, x - par


def project_cone_bruteforce(x, c) -> np.ndarray:
    """Reference cone projection by enumerating supports (small n only)."""
    c = _check_costs(c)
    x = np.asarray(x, dtype=float)
    gens = spanning_vectors(c)
    sq = np.sqrt(c.reshape(-1))
    b = sq * x.reshape(-1)
    best, best_res = np.zeros(x.size), c_norm(x, c)
    m = gens.shape[0]
    for k in range(1, m + 1):
        for sub in itertools.combinations(range(m), k):
            A = (gens[list(sub)] * sq).T
            if np.linalg.matrix_rank(A) < k:
                continue
            z = np.linalg.lstsq(A, b, rcond=None)[0]
            if (z < -1e-12).any():
                continue
            p = gens[list(sub)].T @ z
            res = c_norm(x.reshape(-1) - p, c.reshape(-1))
            if res < best_res - 1e-14:
                best, best_res = p, res
    return best.reshape(x.shape)


def universal_lower_bound(sigma2, eps: float, n: int, c) -> float:
    """Policy-independent lower bound on E[sum c_ij q_ij] in steady state."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    s = float(np.sum(sigma2))
    return float(np.min(c)) * (s / (2 * eps) - n * (1 - eps) / 2)


def zeta_2x2(c) -> np.ndarray:
    """zeta_ij = ||(e_ij)_par||_c^2 using the explicit orthonormal basis of S_c for n=2."""
    c = _check_costs(c)
    if c.shape != (2, 2):
        raise ValueError("zeta_2x2 requires n = 2")
    (c11, c12), (c21, c22) = c
    a, b = c11 + c22, c12 + c21
    f1 = np.sqrt(c11 * c22 / a) * np.array([[1 / c11, 0], [0, -1 / c22]])
    f2 = np.sqrt(c12 * c21 / b) * np.array([[0, 1 / c12], [-1 / c21, 0]])
    f3 = np.sqrt(a * b / (a + b)) * np.array([[1 / a, 1 / b], [1 / b, 1 / a]])
    # <e_ij, f>_c = c_ij f_ij
    return sum((c * f) ** 2 for f in (f1, f2, f3))


def zeta_general(c) -> np.ndarray:
    c = _check_costs(c)
    n = c.shape[0]
    B = WeightedSpace(c).basis  # (2n-1, n*n)
    cf = c.reshape(-1)
    coords = B * cf  # <e_k, f_l>_c = c_k f_l,k
    return (coords ** 2).sum(0).reshape(n, n)


def heavy_traffic_limit(sigma2, c) -> float:
    """lim eps * E[sum c_ij q_ij] under c-weighted MaxWeight: (n/2) sum_ij sigma2_ij zeta_ij."""
    c = _check_costs(c)
    n = c.shape[0]
    return float(n / 2 * np.sum(np.asarray(sigma2, dtype=float) * zeta_general(c)))


def heavy_traffic_limit_c_weighted(sigma2, c) -> float:
    """(n/2) <sigma2, zeta>_c, the weighted form; kept for comparison with simulation."""
    c = _check_costs(c)
    n = c.shape[0]
    return float(n / 2 * np.sum(c * np.asarray(sigma2, dtype=float) * zeta_general(c)))


def closed_form_2x2(sigma2, c) -> float:
    """Printed 2x2 closed form (1/2) sum sigma2 c (1 - c^2 / sum c^2); not the true limit."""
    c = _check_costs(c)
    s = np.asarray(sigma2, dtype=float)
    return float(0.5 * np.sum(s * c * (1 - c ** 2 / np.sum(c ** 2))))


def basis_matrix(c) -> np.ndarray:
    """Rows: affine vectors B_ij (i, j < n), row vectors e^(i)_c, column vectors et^(j)_c (j < n)."""
    c = _check_costs(c)
    n = c.shape[0]
    rows = []
    for i in range(n - 1):
        for j in range(n - 1):
            b = np.zeros((n, n))
            b[i, j] = 1
            b[i, n - 1] = -1
            b[n - 1, j] = -1
            b[n - 1, n - 1] = 1
            rows.append(b.reshape(-1))
    span = spanning_vectors(c)
    rows.extend(span[: 2 * n - 1])
    return np.array(rows)


def matrix_limit(sigma2, c) -> float:
    c = _check_costs(c)
    n = c.shape[0]
    G = basis_matrix(c)
    if np.linalg.cond(G) > 1e12:
        raise ValueError(f"basis matrix is singular for c={c.tolist()}")
    m = (n - 1) ** 2
    T = np.zeros((2 * n - 1, n * n))
    T[:, m:] = np.eye(2 * n - 1)
    GS = T @ G
    Gamma = GS @ np.diag(c.reshape(-1)) @ GS.T
    X = np.linalg.solve(G.T, np.eye(n * n))  # column k solves x^t G = e_k^t
    XS = T @ X
    par_sq = np.einsum("ik,ij,jk->k", XS, Gamma, XS)
    return float(n / 2 * np.sum(_flat(sigma2) * par_sq))


# ---------------------------------------------------------------- collapse diagnostics

@dataclass
class SSCConstants:
    nu_c_min: float
    eta: float
    kappa: float
    D: float
    eps_max: float

    def M(self, r: int) -> float:
        k, D, eta = self.kappa, self.D, self.eta
        inner = (np.sqrt(r) * np.e) ** (1 / r) * 4 * D * (r / np.e) * (D + eta) / eta
        return float(2 ** (1 / r) * max(2 * k, inner))


def ssc_constants(nu, c, lam, sigma2, a_max: int) -> SSCConstants:
    """Constants of the state-space-collapse bound; reported, not asserted."""
    nu, c = np.asarray(nu, float), _check_costs(c)
    n = c.shape[0]
    nu_c_min = float(np.min(nu / c))
    eta = nu_c_min / 4
    kappa = 4 * (np.sum(c * (np.asarray(lam) + np.asarray(sigma2))) + n * c.max()) / nu_c_min
    D = n * np.sqrt(c.max()) * a_max
    eps_max = nu_c_min / (2 * c_norm(nu, c))
    return SSCConstants(nu_c_min, eta, float(kappa), float(D), float(eps_max))


@dataclass
class SSCRow:
    eps: float
    mean_perp_cone: float
    mean_perp_cone_sq: float
    mean_perp_sub: float
    mean_perp_sub_sq: float
    n_samples: int


def residual_norms(q, c) -> tuple[float, float]:
    """(||q_perpK||_c, ||q_perpS||_c) for one queue matrix."""
    _, perp_k = project_cone(q, c)
    _, perp_s = project_subspace(q, c)
    return c_norm(perp_k, c), c_norm(perp_s, c)


def ssc_diagnostic(samples: dict[float, np.ndarray], c) -> list[SSCRow]:
    """First and second moments of cone and subspace residuals per eps.

    ``samples[eps]`` is an array of sampled queue matrices, shape (m, n, n).
    """
    rows = []
    for eps in sorted(samples, reverse=True):
        qs = np.asarray(samples[eps], dtype=float)
        norms = np.array([residual_norms(q, c) for q in qs]) if len(qs) else np.zeros((0, 2))
        rows.append(SSCRow(
            eps,
            float(norms[:, 0].mean()) if len(qs) else 0.0,
            float((norms[:, 0] ** 2).mean()) if len(qs) else 0.0,
            float(norms[:, 1].mean()) if len(qs) else 0.0,
            float((norms[:, 1] ** 2).mean()) if len(qs) else 0.0,
            len(qs),
        ))
    return rows
