"""Scheduling policies.

Every policy exposes ``select(q, u)``: given queue states of shape (R, n, n)
and one uniform per row, return schedule matrices of shape (R, n, n). The
uniform drives tie-breaking so that two policies fed the same stream stay
comparable. Scalar helpers (``maxweight_schedule`` etc.) wrap the batch form.
"""
from __future__ import annotations

import re
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MAX_ENUM_N, Schedule, SwitchConfig, schedule_matrices

TIE_RTOL = 1e-12


class RegionLabel(str, Enum):
    TRIVIAL_BOUNDARY = "trivial_boundary"
    INTERIOR = "interior"
    CRITICAL_BOUNDARY = "critical_boundary"


def pick_uniform(ism: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the floor(u*m)-th True entry per row, m = row count of True."""
    cnt = ism.sum(1)
    k = np.minimum((u * cnt).astype(np.int64), cnt - 1)
    return (np.cumsum(ism, 1) > k[:, None]).argmax(1)


def _argmax_set(w: np.ndarray) -> np.ndarray:
    m = w.max(1, keepdims=True)
    return w >= m - TIE_RTOL * np.maximum(1.0, np.abs(m))


def _as_batch(q) -> np.ndarray:
    q = np.asarray(q)
    if q.ndim == 1:
        m = int(round(np.sqrt(q.size)))
        q = q.reshape(m, m)
    return q[None] if q.ndim == 2 else q


class Policy:
    name = "policy"
    n: int

    def select(self, q: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def schedule(self, q, rng: np.random.Generator) -> Schedule:
        s = self.select(_as_batch(q), rng.random(1))[0]
        return Schedule.from_matrix(s)


class EnumeratedPolicy(Policy):
    """Policy choosing among the n! enumerated schedules by a score."""

    def __init__(self, n: int):
        self.n = n
        self.S = schedule_matrices(n)  # (m, n, n)
        self.Sf = self.S.reshape(len(self.S), -1)

    def scores(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def argmax_set(self, q: np.ndarray) -> np.ndarray:
        return _argmax_set(self.scores(q))

    def select(self, q, u):
        return self.S[pick_uniform(self.argmax_set(q), np.asarray(u))]


class MaxWeightPolicy(EnumeratedPolicy):
    """argmax_s sum c_ij q_ij s_ij with uniform tie-breaking; c = 1 gives plain MaxWeight."""

    def __init__(self, n: int, costs=None):
        self.costs = np.ones((n, n)) if costs is None else np.asarray(costs, float)
        self.name = "maxweight" if costs is None else "c-maxweight"
        self.n = n
        if n <= MAX_ENUM_N:
            super().__init__(n)

    def scores(self, q):
        wq = (q * self.costs).reshape(len(q), -1)
        return wq @ self.Sf.T

    def select(self, q, u):
        if self.n <= MAX_ENUM_N:
            return super().select(q, u)
        return _assignment_select(q * self.costs, u)


def _assignment_select(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Max-weight perfect matching per row of a batch via a random relabelling of ports."""
    R, n, _ = w.shape
    out = np.zeros((R, n, n), dtype=np.int64)
    for r in range(R):
        g = np.random.default_rng(int(u[r] * 2 ** 53))
        pr, pc = g.permutation(n), g.permutation(n)
        rows, cols = linear_sum_assignment(w[r][np.ix_(pr, pc)], maximize=True)
        out[r, pr[rows], pc[cols]] = 1
    return out


def maxweight_schedule(q, c, rng: np.random.Generator) -> Schedule:
    q = np.asarray(q)
    return MaxWeightPolicy(q.shape[0], c).schedule(q, rng)


def maxweight_argmax_set(q, c) -> list[Schedule]:
    q = np.asarray(q)
    p = MaxWeightPolicy(q.shape[0], c)
    ism = p.argmax_set(q[None])[0]
    from .core import enumerate_schedules
    return [s for s, m in zip(enumerate_schedules(q.shape[0]), ism) if m]


# ---------------------------------------------------------------- 2x2 regions

def classify_region(q, c=None) -> RegionLabel:
    q = np.asarray(q)
    if q.size != 4:
        raise ValueError("region classification is defined for 2x2 switches only")
    q = q.reshape(2, 2)
    c = np.ones((2, 2)) if c is None else np.asarray(c, float).reshape(2, 2)
    S = schedule_matrices(2)
    nz = q > 0
    if any(not (nz & (s == 0)).any() for s in S):
        return RegionLabel.TRIVIAL_BOUNDARY
    rmax = max(float((c * s).sum()) for s in S)
    best = max(float((c * s * nz).sum()) for s in S)
    if best >= rmax - 1e-12 * rmax:
        return RegionLabel.INTERIOR
    return RegionLabel.CRITICAL_BOUNDARY


class SymmetricOptimal2x2(EnumeratedPolicy):
    """Two packets whenever possible (heavier schedule first), otherwise the longest nonempty queue."""
    name = "symmetric-opt"

    def __init__(self, config: SwitchConfig | None = None):
        if config is not None:
            lam = config.arrivals.mean
            if config.n != 2:
                raise ValueError("symmetric-opt requires n = 2")
            if not np.allclose(config.costs, config.costs.flat[0]):
                raise ValueError("symmetric-opt requires equal costs")
            if config.arrivals.kind != "bernoulli" or not np.allclose(lam, lam.flat[0]):
                raise ValueError("symmetric-opt requires symmetric Bernoulli arrivals")
        super().__init__(2)

    def scores(self, q):
        qf = q.reshape(len(q), -1)
        served = (qf > 0).astype(np.int64) @ self.Sf.T
        weight = qf @ self.Sf.T
        two = served == 2
        # schedules serving two packets dominate; among the rest, weight = longest queue
        return np.where(two.any(1, keepdims=True), np.where(two, 1.0 + weight, -1.0), weight.astype(float))


def symmetric_optimal_schedule(q, rng: np.random.Generator) -> Schedule:
    return SymmetricOptimal2x2().schedule(q, rng)


# ---------------------------------------------------------------- look-ahead and tables

class LookAheadPolicy(EnumeratedPolicy):
    """Greedy one-step policy against a value function on the 2x2 grid.

    If ``V.k <= Q_max - 1`` the table is exact for every state after clipping
    each queue at Q_max (V_k only sees min(q, k)); otherwise states outside the
    non-frontier box raise a truncation error.
    """

    def __init__(self, V, horizon: int | None = None):
        from .mdp import action_scores

        super().__init__(2)
        self.V = V
        self.horizon = V.k + 1 if horizon is None else horizon
        self.name = f"lookahead:k={self.horizon}"
        vals = V.values.astype(float) if V.exact else V.values
        self.table = action_scores(vals, V.beta, V.costs, V.arrivals, V.space.q_max)
        self.saturated = V.k <= V.space.q_max - 1
        self.limit = V.space.q_max if self.saturated else V.space.safe_max

    def scores(self, q):
        from .mdp import TruncationError

        qf = q.reshape(len(q), 4)
        if self.saturated:
            qf = np.minimum(qf, self.limit)
        elif (qf > self.limit).any():
            bad = qf[(qf > self.limit).any(1)][0]
            raise TruncationError(f"state {bad.tolist()} lies outside the value table's safe box "
                                  f"(coordinates <= {self.limit})")
        idx = tuple(qf.T)
        return np.stack([self.table[s][idx] for s in range(2)], 1)

    def argmax_set(self, q):
        w = self.scores(q)
        m = w.max(1, keepdims=True)
        return w >= m - 1e-9 * np.maximum(1.0, np.abs(m))


def lookahead_policy(config: SwitchConfig, beta: float, k: int, q_max: int | None = None) -> LookAheadPolicy:
    """Step-size-k look-ahead: greedy against V_{k-1}, the policy that generates V_k."""
    from .mdp import value_iteration

    if k < 1:
        raise ValueError("look-ahead step size must be >= 1")
    a_max = config.arrivals.a_max
    if q_max is None:
        q_max = max(k, a_max + 1) + 1
    V, _ = value_iteration(config, beta, q_max, max_k=k - 1)
    return LookAheadPolicy(V, horizon=k)


def lookahead_schedule(q, V, rng: np.random.Generator, arrivals=None, beta=None) -> Schedule:
    """argmax_s r(q,s) + beta E[V((q-s)^+ + A)] for the supplied V, ties uniform."""
    if arrivals is not None or beta is not None:
        from dataclasses import replace
        V = replace(V, arrivals=arrivals if arrivals is not None else V.arrivals,
                    beta=beta if beta is not None else V.beta)
    return LookAheadPolicy(V).schedule(q, rng)


class TablePolicy(EnumeratedPolicy):
    """Canonical action of a stored policy table; frontier states are refused."""

    def __init__(self, table, name: str = "table"):
        super().__init__(2)
        self.tbl = table
        self.name = name

    def select(self, q, u):
        from .mdp import TruncationError

        qf = q.reshape(len(q), 4)
        lim = self.tbl.space.safe_max
        if (qf > lim).any():
            bad = qf[(qf > lim).any(1)][0]
            raise TruncationError(f"state {bad.tolist()} lies outside the policy table's safe box "
                                  f"(coordinates <= {lim})")
        return self.S[self.tbl.action[tuple(qf.T)]]


# ---------------------------------------------------------------- parsing

def parse_policy(spec: str, config: SwitchConfig, beta: float | None = None) -> Policy:
    """Build a policy from its string identifier."""
    spec = spec.strip()
    if spec == "maxweight":
        return MaxWeightPolicy(config.n)
    if spec == "c-maxweight":
        return MaxWeightPolicy(config.n, config.costs)
    if spec == "symmetric-opt":
        return SymmetricOptimal2x2(config)
    m = re.fullmatch(r"lookahead:k=(\d+)", spec)
    if m:
        if beta is None:
            raise ValueError("look-ahead policies need a discount factor")
        if config.n != 2:
            raise ValueError("look-ahead policies are built from the 2x2 value iteration")
        return lookahead_policy(config, beta, int(m.group(1)))
    if spec.startswith("table:"):
        from .mdp import PolicyTable
        return TablePolicy(PolicyTable.load(spec[len("table:"):]), name=spec)
    raise ValueError(f"unknown policy {spec!r}; expected maxweight, c-maxweight, symmetric-opt, "
                     "lookahead:k=<K> or table:<path>")
