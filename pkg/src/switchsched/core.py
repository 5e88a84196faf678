"""Switch model: schedules, arrivals, one-slot dynamics and rewards.

Queue states are n x n integer arrays indexed [input, output]. A schedule is a
permutation ``perm`` with input i connected to output ``perm[i]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

MAX_ENUM_N = 8


@dataclass(frozen=True)
class Schedule:
    perm: tuple[int, ...]

    def __post_init__(self):
        n = len(self.perm)
        if sorted(self.perm) != list(range(n)):
            raise ValueError(f"not a permutation: {self.perm}")

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def matrix(self) -> np.ndarray:
        s = np.zeros((self.n, self.n), dtype=np.int64)
        s[np.arange(self.n), list(self.perm)] = 1
        return s

    @classmethod
    def from_matrix(cls, s) -> "Schedule":
        s = np.asarray(s)
        if not (np.all(s.sum(0) == 1) and np.all(s.sum(1) == 1) and np.isin(s, (0, 1)).all()):
            raise ValueError("schedule matrix must be a permutation matrix")
        return cls(tuple(int(j) for j in s.argmax(1)))


def enumerate_schedules(n: int) -> list[Schedule]:
    """All n! schedules in lexicographic order of the permutation."""
    if not isinstance(n, (int, np.integer)) or n < 2 or n > MAX_ENUM_N:
        raise ValueError(f"enumerate_schedules supports 2 <= n <= {MAX_ENUM_N}, got {n}")
    return [Schedule(p) for p in itertools.permutations(range(n))]


def schedule_matrices(n: int) -> np.ndarray:
    """Stacked 0/1 matrices of all schedules, shape (n!, n, n)."""
    return np.stack([s.matrix for s in enumerate_schedules(n)])


# ---------------------------------------------------------------- arrivals

@dataclass(frozen=True)
class ArrivalProcess:
    """Independent per-queue arrivals with bounded support {0..A_max}.

    ``pmf`` has shape (n, n, A_max + 1).
    """
    pmf: np.ndarray
    kind: str = "pmf"

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[1] or p.shape[2] < 2:
            raise ValueError("pmf must have shape (n, n, A_max+1) with A_max >= 1")
        if (p < 0).any():
            raise ValueError("pmf entries must be nonnegative")
        if not np.allclose(p.sum(-1), 1.0, atol=1e-12):
            raise ValueError("each per-queue pmf must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    @classmethod
    def bernoulli(cls, lam) -> "ArrivalProcess":
        lam = np.asarray(lam, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError("rates must be a square matrix")
        if (lam < 0).any() or (lam > 1).any():
            raise ValueError("Bernoulli rates must lie in [0, 1]")
        return cls(np.stack([1.0 - lam, lam], axis=-1), kind="bernoulli")

    @classmethod
    def uniform_bernoulli(cls, n: int, lam: float) -> "ArrivalProcess":
        return cls.bernoulli(np.full((n, n), float(lam)))

    @property
    def n(self) -> int:
        return self.pmf.shape[0]

    @property
    def a_max(self) -> int:
        # trailing zero-probability support is kept: A_max is the declared cap
        return self.pmf.shape[2] - 1

    @property
    def mean(self) -> np.ndarray:
        return self.pmf @ np.arange(self.a_max + 1)

    @property
    def var(self) -> np.ndarray:
        k = np.arange(self.a_max + 1)
        return self.pmf @ (k ** 2) - self.mean ** 2

    def to_dict(self) -> dict:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "rates": self.mean.tolist()}
        return {"kind": "pmf", "pmf": self.pmf.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ArrivalProcess":
        if d["kind"] == "bernoulli":
            return cls.bernoulli(d["rates"])
        return cls(np.asarray(d["pmf"], dtype=float))


def sample_arrivals(p: ArrivalProcess, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one arrival matrix (or ``size`` of them) by inverse-CDF sampling."""
    shape = (p.n, p.n) if size is None else (size, p.n, p.n)
    u = rng.random(shape)
    return arrivals_from_uniforms(p, u)


def arrivals_from_uniforms(p: ArrivalProcess, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p.pmf, axis=-1)[..., :-1]  # (n, n, A_max)
    # count of cdf thresholds below u gives the sampled value
    return (u[..., None] >= cdf).sum(-1).astype(np.int64)


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class SwitchConfig:
    n: int
    costs: np.ndarray
    arrivals: ArrivalProcess

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if c.shape != (self.n, self.n):
            raise ValueError(f"costs must be {self.n}x{self.n}")
        if not (c > 0).all():
            raise ValueError("costs must be strictly positive")
        if self.arrivals.n != self.n:
            raise ValueError("arrival process dimension does not match n")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @classmethod
    def uniform(cls, n: int, lam: float, cost: float = 1.0) -> "SwitchConfig":
        return cls(n, np.full((n, n), cost), ArrivalProcess.uniform_bernoulli(n, lam))


# ---------------------------------------------------------------- dynamics

def step(q, s: Schedule | np.ndarray, a) -> np.ndarray:
    q = np.asarray(q)
    sm = s.matrix if isinstance(s, Schedule) else np.asarray(s)
    return q + np.asarray(a) - sm * (q > 0)


def unused_service(q, s: Schedule | np.ndarray) -> np.ndarray:
    q = np.asarray(q)
    sm = s.matrix if isinstance(s, Schedule) else np.asarray(s)
    return sm * (q == 0)


def reward(q, s: Schedule | np.ndarray, c) -> float:
    q = np.asarray(q)
    sm = s.matrix if isinstance(s, Schedule) else np.asarray(s)
    return float((np.asarray(c) * sm * (q > 0)).sum())


class Admissibility(str, Enum):
    STABLE = "stable"
    CRITICAL = "critical"
    OVERLOADED = "overloaded"


@dataclass
class RateCheck:
    status: Admissibility
    row_loads: np.ndarray
    col_loads: np.ndarray
    max_load: float = field(init=False)

    def __post_init__(self):
        self.max_load = float(max(self.row_loads.max(), self.col_loads.max()))


def check_admissible_rates(lam, tol: float = 1e-12) -> RateCheck:
    lam = np.asarray(lam, dtype=float)
    if (lam < 0).any():
        raise ValueError("arrival rates must be nonnegative")
    rows, cols = lam.sum(1), lam.sum(0)
    m = max(rows.max(), cols.max())
    if m < 1 - tol:
        status = Admissibility.STABLE
    elif m <= 1 + tol:
        status = Admissibility.CRITICAL
    else:
        status = Admissibility.OVERLOADED
    return RateCheck(status, rows, cols)


def discounted_horizon(beta: float, rel_tail: float = 1e-3) -> int:
    """Smallest T with beta^T <= rel_tail * (1 - beta)."""
    return int(math.ceil(math.log(rel_tail * (1 - beta)) / math.log(beta)))


def as_queue_state(q: Sequence | np.ndarray, n: int | None = None) -> np.ndarray:
    q = np.asarray(q, dtype=np.int64)
    if q.ndim == 1:
        m = int(round(math.sqrt(q.size)))
        q = q.reshape(m, m)
    if n is not None and q.shape != (n, n):
        raise ValueError(f"queue state must be {n}x{n}")
    if (q < 0).any():
        raise ValueError("queue lengths must be nonnegative")
    return q
