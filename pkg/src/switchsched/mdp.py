"""Value iteration for the reward form of the 2x2 discounted problem.

States are 4-tuples (q11, q12, q21, q22) on the box {0..Q_max}^4, stored as a
dense array of shape (Q_max+1,)*4. Schedule 0 serves (q11, q22), schedule 1
serves (q12, q21). Successor states are clamped at Q_max; states with any
coordinate above Q_max - A_max are "frontier" and are excluded from every
verification sweep.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import ArrivalProcess, SwitchConfig, schedule_matrices

FORMAT_VERSION = 1
SCHEDULES = schedule_matrices(2).reshape(2, 4)  # [[1,0,0,1],[0,1,1,0]]
PARTNER = (3, 2, 1, 0)  # queue sharing a schedule with each queue
OTHER = {0: (1, 2), 3: (1, 2), 1: (0, 3), 2: (0, 3)}  # the two queues conflicting with each queue
QUEUE_NAMES = ("q11", "q12", "q21", "q22")
TIE_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, msg, last_delta):
        super().__init__(msg)
        self.last_delta = last_delta


class TruncationError(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedStateSpace:
    q_max: int
    a_max: int = 1

    def __post_init__(self):
        if self.q_max < self.a_max + 1:
            raise ValueError(f"Q_max={self.q_max} must be at least A_max+1={self.a_max + 1}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.q_max + 1,) * 4

    @property
    def safe_max(self) -> int:
        """Largest coordinate of a non-frontier state."""
        return self.q_max - self.a_max

    def frontier_mask(self) -> np.ndarray:
        g = np.indices(self.shape)
        return (g > self.safe_max).any(0)

    def states(self) -> np.ndarray:
        """All states in lexicographic order, shape (N, 4)."""
        return np.indices(self.shape).reshape(4, -1).T


def _as_state(q) -> tuple[int, int, int, int]:
    q = np.asarray(q).reshape(-1)
    if q.size != 4:
        raise ValueError("2x2 states have four coordinates")
    return tuple(int(v) for v in q)


@dataclass
class ValueFunction:
    values: np.ndarray
    beta: float
    k: int
    space: TruncatedStateSpace
    costs: np.ndarray
    arrivals: ArrivalProcess
    deltas: list = field(default_factory=list)

    @property
    def exact(self) -> bool:
        return self.values.dtype == object

    @property
    def config(self) -> SwitchConfig:
        return SwitchConfig(2, self.costs, self.arrivals)

    def __call__(self, q) -> float:
        return self.values[_as_state(q)]

    def header(self) -> dict:
        return {
            "format": "switchsched-value-function",
            "version": FORMAT_VERSION,
            "n": 2,
            "Q_max": self.space.q_max,
            "A_max": self.space.a_max,
            "beta": self.beta,
            "costs": np.asarray(self.costs, float).tolist(),
            "arrivals": self.arrivals.to_dict(),
            "k": self.k,
            "exact": self.exact,
            "state_order": list(QUEUE_NAMES),
        }

    def save(self, path) -> None:
        arrays = {"header": np.array(json.dumps(self.header()))}
        if self.exact:
            arrays["values_exact"] = np.array([str(v) for v in self.values.reshape(-1)])
            arrays["values"] = self.values.astype(float).reshape(-1)
        else:
            arrays["values"] = self.values.reshape(-1)
        with open(path, "wb") as fh:
            np.savez_compressed(fh, **arrays)

    @classmethod
    def load(cls, path) -> "ValueFunction":
        with np.load(path, allow_pickle=False) as z:
            h = json.loads(str(z["header"]))
            if h.get("format") != "switchsched-value-function" or h.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: not a version-{FORMAT_VERSION} value-function file")
            space = TruncatedStateSpace(h["Q_max"], h["A_max"])
            if h.get("exact") and "values_exact" in z:
                vals = np.array([Fraction(s) for s in z["values_exact"]], dtype=object)
            else:
                vals = z["values"].astype(float)
        return cls(vals.reshape(space.shape), h["beta"], h["k"], space,
                   np.asarray(h["costs"], float), ArrivalProcess.from_dict(h["arrivals"]))


@dataclass
class PolicyTable:
    """Greedy policy against V_k: canonical action plus the full optimal set."""
    action: np.ndarray  # int8, canonical (first) maximiser
    optimal: np.ndarray  # uint8 bitmask, bit s set if schedule s is optimal within tolerance
    k: int
    beta: float
    space: TruncatedStateSpace
    costs: np.ndarray
    arrivals: ArrivalProcess

    def __call__(self, q) -> int:
        return int(self.action[_as_state(q)])

    def is_optimal(self, s: int) -> np.ndarray:
        return (self.optimal >> s) & 1 == 1

    def header(self) -> dict:
        return {
            "format": "switchsched-policy-table",
            "version": FORMAT_VERSION,
            "n": 2,
            "Q_max": self.space.q_max,
            "A_max": self.space.a_max,
            "beta": self.beta,
            "costs": np.asarray(self.costs, float).tolist(),
            "arrivals": self.arrivals.to_dict(),
            "k": self.k,
            "state_order": list(QUEUE_NAMES),
            "schedules": SCHEDULES.tolist(),
        }

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez_compressed(fh, header=np.array(json.dumps(self.header())),
                                action=self.action.reshape(-1), optimal=self.optimal.reshape(-1))

    @classmethod
    def load(cls, path) -> "PolicyTable":
        with np.load(path, allow_pickle=False) as z:
            h = json.loads(str(z["header"]))
            if h.get("format") != "switchsched-policy-table" or h.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: not a version-{FORMAT_VERSION} policy-table file")
            space = TruncatedStateSpace(h["Q_max"], h["A_max"])
            action = z["action"].reshape(space.shape)
            optimal = z["optimal"].reshape(space.shape)
        return cls(action, optimal, h["k"], h["beta"], space,
                   np.asarray(h["costs"], float), ArrivalProcess.from_dict(h["arrivals"]))


# ---------------------------------------------------------------- operator

def _arrival_pmf4(arrivals: ArrivalProcess, exact: bool):
    pmf = arrivals.pmf.reshape(4, -1)
    if exact:
        return [[Fraction(p).limit_denominator(10 ** 12) for p in row] for row in pmf]
    return pmf


def _check_model(costs, arrivals: ArrivalProcess, space: TruncatedStateSpace):
    if arrivals.n != 2 or np.asarray(costs).shape != (2, 2):
        raise ValueError("the MDP solver handles 2x2 switches only")
    if arrivals.a_max > space.a_max:
        raise ValueError(f"arrival support A_max={arrivals.a_max} exceeds the grid's A_max={space.a_max}")


def expected_next(V: np.ndarray, pmf4, q_max: int) -> np.ndarray:
    """W(x) = E[V(min(x + A, Q_max))], one independent axis at a time."""
    idx = np.arange(q_max + 1)
    W = V
    for ax in range(4):
        acc = None
        for a, p in enumerate(pmf4[ax]):
            if p == 0:
                continue
            term = p * np.take(W, np.minimum(idx + a, q_max), axis=ax)
            acc = term if acc is None else acc + term
        W = acc
    return W


def _reward_tables(costs, q_max: int, exact: bool) -> np.ndarray:
    cf = np.asarray(costs, float).reshape(4)
    if exact:
        cf = np.array([Fraction(x).limit_denominator(10 ** 12) for x in cf], dtype=object)
    g = np.indices((q_max + 1,) * 4)
    occ = g > 0
    out = []
    for s in SCHEDULES:
        r = sum(cf[ax] * occ[ax] for ax in range(4) if s[ax])
        out.append(r)
    return np.stack(out)


def action_scores(V: np.ndarray, beta, costs, arrivals: ArrivalProcess, q_max: int) -> np.ndarray:
    """score[s][q] = r(q, s) + beta * E[V(min((q - s)^+ + A, Q_max))], shape (2, *grid)."""
    exact = V.dtype == object
    if exact:
        beta = Fraction(beta).limit_denominator(10 ** 12) if not isinstance(beta, Fraction) else beta
    W = expected_next(V, _arrival_pmf4(arrivals, exact), q_max)
    idx_down = np.maximum(np.arange(q_max + 1) - 1, 0)
    rewards = _reward_tables(costs, q_max, exact)
    out = []
    for si, s in enumerate(SCHEDULES):
        Ws = W
        for ax in range(4):
            if s[ax]:
                Ws = np.take(Ws, idx_down, axis=ax)
        out.append(rewards[si] + beta * Ws)
    return np.stack(out)


def _optimal_sets(scores: np.ndarray, rtol: float = TIE_RTOL):
    best = scores.max(0)
    if scores.dtype == object:
        opt = scores == best
    else:
        opt = scores >= best - rtol * np.maximum(1.0, np.abs(best))
    mask = np.zeros(best.shape, dtype=np.uint8)
    for s in range(scores.shape[0]):
        mask |= opt[s].astype(np.uint8) << s
    action = opt.argmax(0).astype(np.int8)
    return best, action, mask


def bellman_iterate(V: ValueFunction) -> ValueFunction:
    _check_model(V.costs, V.arrivals, V.space)
    sc = action_scores(V.values, V.beta, V.costs, V.arrivals, V.space.q_max)
    new = sc.max(0)
    return ValueFunction(new, V.beta, V.k + 1, V.space, V.costs, V.arrivals, list(V.deltas))


def greedy_policy(V: ValueFunction) -> PolicyTable:
    """Policy maximising r + beta E[V(next)], i.e. the policy that generates V_{k+1}."""
    sc = action_scores(V.values, V.beta, V.costs, V.arrivals, V.space.q_max)
    _, action, mask = _optimal_sets(sc)
    return PolicyTable(action, mask, V.k, V.beta, V.space, V.costs, V.arrivals)


def zero_value(config: SwitchConfig, beta: float, q_max: int, exact: bool = False) -> ValueFunction:
    if config.n != 2:
        raise ValueError("the MDP solver handles 2x2 switches only")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    space = TruncatedStateSpace(q_max, config.arrivals.a_max)
    if exact:
        vals = np.empty(space.shape, dtype=object)
        vals.fill(Fraction(0))
    else:
        vals = np.zeros(space.shape)
    return ValueFunction(vals, beta, 0, space, np.asarray(config.costs), config.arrivals)


def stopping_threshold(eps: float, beta: float) -> float:
    """Sup-norm stopping threshold guaranteeing an eps-optimal greedy policy."""
    return eps * (1 - beta) ** 2 / (2 * beta ** 2)


def value_iteration(config: SwitchConfig, beta: float, q_max: int, max_k: int | None = None,
                    tol: float | None = None, exact: bool = False, keep: tuple[int, ...] = (),
                    budget: int = 200_000):
    """Iterate from V_0 = 0 until k = max_k or ||V_{k+1} - V_k|| < tol.

    Returns (V, policy) where policy is greedy against the returned V. With
    ``keep`` the intermediate iterates at those k are stored in ``V.snapshots``.
    """
    if max_k is None and tol is None:
        raise ValueError("give max_k, tol, or both")
    V = zero_value(config, beta, q_max, exact)
    snapshots = {}
    if 0 in keep:
        snapshots[0] = V
    limit = max_k if max_k is not None else budget
    converged = False
    while V.k < limit:
        nxt = bellman_iterate(V)
        diff = nxt.values - V.values
        delta = float(np.max(np.abs(diff.astype(float)))) if diff.size else 0.0
        nxt.deltas.append(delta)
        V = nxt
        if V.k in keep:
            snapshots[V.k] = V
        if tol is not None and delta < tol:
            converged = True
            break
    if tol is not None and not converged and max_k is None:
        raise ConvergenceError(f"no convergence within {limit} iterations; last delta "
                               f"{V.deltas[-1] if V.deltas else float('nan'):.3e}",
                               V.deltas[-1] if V.deltas else None)
    V.snapshots = snapshots
    V.converged = converged
    return V, greedy_policy(V)


# ---------------------------------------------------------------- regions

def region_grid(costs, q_max: int) -> np.ndarray:
    """Region code per grid state: 0 trivial boundary, 1 interior, 2 critical boundary."""
    from .schedulers import RegionLabel, classify_region

    out = np.empty((2,) * 4, dtype=np.int8)
    codes = {RegionLabel.TRIVIAL_BOUNDARY: 0, RegionLabel.INTERIOR: 1, RegionLabel.CRITICAL_BOUNDARY: 2}
    # the region depends only on the nonempty pattern
    for pat in itertools.product((0, 1), repeat=4):
        out[pat] = codes[classify_region(np.array(pat).reshape(2, 2), costs)]
    g = np.minimum(np.indices((q_max + 1,) * 4), 1)
    return out[tuple(g)]


def r_max(costs) -> float:
    c = np.asarray(costs, float).reshape(4)
    return float(max(c[0] + c[3], c[1] + c[2]))


# ---------------------------------------------------------------- verification

@dataclass
class InequalityResult:
    name: str
    checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    counterexamples: list = field(default_factory=list)
    skipped: str | None = None

    def add(self, lhs, rhs, states, label, tol):
        lhs = np.asarray(lhs, dtype=object if lhs.dtype == object else float)
        if lhs.size == 0:
            return
        margin = lhs - rhs
        if margin.dtype == object:
            bad = margin < 0
            mf = margin.astype(float)
        else:
            scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
            bad = margin < -tol * scale
            mf = margin
        self.checked += int(margin.size)
        self.worst_margin = min(self.worst_margin, float(mf.min()))
        nb = int(bad.sum())
        self.violations += nb
        if nb and len(self.counterexamples) < 10:
            for st in states[bad][: 10 - len(self.counterexamples)]:
                self.counterexamples.append({"state": [int(v) for v in st], "pattern": label})

    def to_dict(self) -> dict:
        return {"name": self.name, "checked": self.checked, "violations": self.violations,
                "worst_margin": None if math.isinf(self.worst_margin) else self.worst_margin,
                "counterexamples": self.counterexamples, "skipped": self.skipped}


@dataclass
class InequalityReport:
    k: int
    results: list[InequalityResult]

    @property
    def total_violations(self) -> int:
        return sum(r.violations for r in self.results)

    @property
    def passed(self) -> bool:
        return self.total_violations == 0

    def __getitem__(self, name) -> InequalityResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"k": self.k, "passed": self.passed, "total_violations": self.total_violations,
                "results": [r.to_dict() for r in self.results]}

    def table(self) -> str:
        lines = [f"{'inequality':<26}{'checked':>10}{'violations':>12}{'worst margin':>16}"]
        for r in self.results:
            wm = "skipped" if r.skipped else ("-" if math.isinf(r.worst_margin) else f"{r.worst_margin:.3e}")
            lines.append(f"{r.name:<26}{r.checked:>10}{r.violations:>12}{wm:>16}")
        return "\n".join(lines)


def _unit(i: int) -> np.ndarray:
    e = np.zeros(4, dtype=np.int64)
    e[i] = 1
    return e


class _Stencil:
    """Evaluates V at q + offset for every base state q whose whole stencil is non-frontier."""

    def __init__(self, V: np.ndarray, safe_max: int, offsets):
        offs = np.array(offsets, dtype=np.int64).reshape(-1, 4)
        self.lo = np.maximum(0, -offs.min(0))
        self.hi = safe_max - offs.max(0)
        self.V = V
        self.empty = bool((self.hi < self.lo).any())

    def at(self, off) -> np.ndarray:
        off = np.asarray(off)
        sl = tuple(slice(self.lo[a] + off[a], self.hi[a] + off[a] + 1) for a in range(4))
        return self.V[sl].reshape(-1)

    def states(self) -> np.ndarray:
        rng = [np.arange(self.lo[a], self.hi[a] + 1) for a in range(4)]
        return np.stack(np.meshgrid(*rng, indexing="ij"), -1).reshape(-1, 4)


def verify_inequalities(V: ValueFunction, tol: float = 1e-9) -> InequalityReport:
    vals = V.values
    beta = V.beta
    if V.exact and not isinstance(beta, Fraction):
        beta = Fraction(beta).limit_denominator(10 ** 12)
    c = np.asarray(V.costs, float).reshape(4)
    cc = [Fraction(x).limit_denominator(10 ** 12) for x in c] if V.exact else list(c)
    F = V.space.safe_max
    res = {name: InequalityResult(name) for name in (
        "lipschitz", "interior", "cost_order", "two_queues", "three_queues_other",
        "three_queues_same", "concave_single", "three_different", "supermodular_pair", "aux_lemma")}

    def run(name, offs_l, offs_r, const_l=0, const_r=0, coef=1, label=None):
        st = _Stencil(vals, F, list(offs_l) + list(offs_r))
        if st.empty:
            return
        lhs = sum(coef * st.at(o) for o in offs_l) + const_l
        rhs = sum(coef * st.at(o) for o in offs_r) + const_r
        res[name].add(np.asarray(lhs), np.asarray(rhs), st.states(), label, tol)

    z = np.zeros(4, dtype=np.int64)
    for ij in range(4):
        e = _unit(ij)
        # beta V(q + e) <= beta V(q) + c
        run("lipschitz", [z], [e], const_l=cc[ij], coef=beta, label={"ij": QUEUE_NAMES[ij]})

    # interior: r(q,s) + beta V(q-s) >= r(q,s') + beta V(q-s') for interior q, r(q,s)=r_max, s' <= q
    rm = r_max(c)
    sched_r = [c[SCHEDULES[s] == 1].sum() for s in range(2)]
    for s in range(2):
        if sched_r[s] < rm - 1e-12:
            continue
        for sp in range(2):
            offs = [-SCHEDULES[s], -SCHEDULES[sp]]
            st = _Stencil(vals, F, offs)
            if st.empty:
                continue
            states = st.states()
            # r(q,s) = r_max requires every queue of s nonempty; s' <= q holds on the stencil base
            mask = (states[:, SCHEDULES[s] == 1] > 0).all(1) & (states[:, SCHEDULES[sp] == 1] > 0).all(1)
            rs = sum(cc[i] for i in range(4) if SCHEDULES[s][i])
            rsp = sum(cc[i] for i in range(4) if SCHEDULES[sp][i])
            lhs = (rs + beta * st.at(offs[0]))[mask]
            rhs = (rsp + beta * st.at(offs[1]))[mask]
            res["interior"].add(lhs, rhs, states[mask], {"s": s, "s_prime": sp}, tol)

    gated_any = False
    for mu in range(4):
        nu = PARTNER[mu]
        rho, om = OTHER[mu]
        em, en, er, eo = _unit(mu), _unit(nu), _unit(rho), _unit(om)
        lab = {"mu": QUEUE_NAMES[mu], "nu": QUEUE_NAMES[nu], "rho": QUEUE_NAMES[rho], "omega": QUEUE_NAMES[om]}
        # c_rho + c_omega + beta V(q+e_mu) >= c_mu + beta V(q+e_rho+e_omega), when the cost ordering holds
        if c[mu] <= c[rho] + c[om] + 1e-12 and c[rho] + c[om] <= c[mu] + c[nu] + 1e-12:
            gated_any = True
            run("cost_order", [em], [er + eo], const_l=cc[rho] + cc[om], const_r=cc[mu], coef=beta, label=lab)
        for r_, o_ in ((rho, om), (om, rho)):
            er_, eo_ = _unit(r_), _unit(o_)
            l2 = dict(lab, rho=QUEUE_NAMES[r_], omega=QUEUE_NAMES[o_])
            run("two_queues", [em + er_, em], [2 * em, er_], label=l2)
            run("three_queues_other", [em + er_, em + en], [2 * em + en, er_], label=l2)
        run("three_queues_same", [em + er + eo, em], [2 * em, er + eo], label=lab)
        run("concave_single", [em, em], [z, 2 * em], label=lab)
        run("three_different", [em + en, em], [2 * em + en, z], label=lab)
        run("supermodular_pair", [em + en, z], [em, en], label=lab)
    if not gated_any:
        res["cost_order"].skipped = "cost ordering c_mu <= c_rho + c_omega <= c_mu + c_nu fails for every mu"

    # auxiliary lemma: x within one schedule, y within the other, x + y = z + w
    for x_bits in itertools.product((0, 1), repeat=2):
        for y_bits in itertools.product((0, 1), repeat=2):
            x = np.array([x_bits[0], 0, 0, x_bits[1]])
            y = np.array([0, y_bits[0], y_bits[1], 0])
            tot = x + y
            supp = np.flatnonzero(tot)
            for zb in itertools.product((0, 1), repeat=len(supp)):
                zz = np.zeros(4, dtype=np.int64)
                zz[supp] = zb
                ww = tot - zz
                if (np.array_equal(zz, x) and np.array_equal(ww, y)) or (np.array_equal(zz, y) and np.array_equal(ww, x)):
                    continue
                run("aux_lemma", [x, y], [zz, ww], label={"x": x.tolist(), "y": y.tolist(), "z": zz.tolist(), "w": ww.tolist()})

    return InequalityReport(V.k, list(res.values()))


# ---------------------------------------------------------------- structure checks

@dataclass
class StructureReport:
    trivial_checked: int
    trivial_failures: list
    interior_checked: int
    interior_failures: list
    interior_canonical_failures: list
    s1_checked: int
    s1_failures: list

    @property
    def passed(self) -> bool:
        return not (self.trivial_failures or self.interior_failures or self.s1_failures)


def check_structure(policy: PolicyTable) -> StructureReport:
    """Covering on the trivial boundary, r_max in the interior, S1 monotonicity from critical states."""
    F = policy.space.safe_max
    box = tuple(slice(0, F + 1) for _ in range(4))
    reg = region_grid(policy.costs, policy.space.q_max)[box]
    opt = policy.optimal[box]
    act = policy.action[box]
    g = np.indices(reg.shape)
    nonempty = g > 0
    c = np.asarray(policy.costs, float).reshape(4)
    rm = r_max(c)

    def listing(mask, limit=20):
        return [tuple(int(v) for v in st) for st in np.argwhere(mask)[:limit]]

    # trivial boundary: some covering schedule is optimal
    covers = [~(nonempty & (SCHEDULES[s][:, None, None, None, None] == 0)).any(0) for s in range(2)]
    ok_triv = np.zeros(reg.shape, bool)
    for s in range(2):
        ok_triv |= covers[s] & ((opt >> s) & 1 == 1)
    tmask = reg == 0
    # interior: some r_max schedule is optimal, and the canonical action attains r_max
    attains = [(nonempty[SCHEDULES[s] == 1].all(0)) & (c[SCHEDULES[s] == 1].sum() >= rm - 1e-12) for s in range(2)]
    ok_int = np.zeros(reg.shape, bool)
    canon = np.zeros(reg.shape, bool)
    for s in range(2):
        ok_int |= attains[s] & ((opt >> s) & 1 == 1)
        canon |= attains[s] & (act == s)
    imask = reg == 1

    # S1 from critical states: if the schedule of mu is optimal at q it stays optimal at q+e_mu,
    # q+e_nu, and after removing a packet from either conflicting queue
    s1_fail, s1_checked = [], 0
    crit = reg == 2
    for mu in range(4):
        s = 0 if mu in (0, 3) else 1
        sopt = (opt >> s) & 1 == 1
        nu = PARTNER[mu]
        for ax, d in ((mu, 1), (nu, 1), (OTHER[mu][0], -1), (OTHER[mu][1], -1)):
            src = [slice(None)] * 4
            dst = [slice(None)] * 4
            if d == 1:
                src[ax], dst[ax] = slice(0, F), slice(1, F + 1)
            else:
                src[ax], dst[ax] = slice(1, F + 1), slice(0, F)
            base = crit[tuple(src)] & sopt[tuple(src)]
            bad = base & ~sopt[tuple(dst)]
            s1_checked += int(base.sum())
            if bad.any() and len(s1_fail) < 20:
                for st in np.argwhere(bad)[: 20 - len(s1_fail)]:
                    st = st.copy()
                    if d == -1:
                        st[ax] += 1
                    s1_fail.append({"state": tuple(int(v) for v in st), "mu": QUEUE_NAMES[mu],
                                    "move": f"{'+' if d > 0 else '-'}{QUEUE_NAMES[ax]}"})
    return StructureReport(int(tmask.sum()), listing(tmask & ~ok_triv), int(imask.sum()),
                           listing(imask & ~ok_int), listing(imask & ~canon), s1_checked, s1_fail)


@dataclass
class SwitchingCurve:
    """thresholds[(mu, others)] = least q_mu >= 1 at which serving mu's schedule is optimal.

    ``others`` are the remaining three coordinates in queue order; None means
    never optimal on the non-frontier slice.
    """
    thresholds: dict
    safe_max: int
    violations: list

    def threshold(self, mu: int, q) -> int | None:
        q = _as_state(q)
        others = tuple(q[i] for i in range(4) if i != mu)
        return self.thresholds.get((mu, others))

    def to_rows(self) -> list[dict]:
        rows = []
        for (mu, others), t in sorted(self.thresholds.items()):
            names = [QUEUE_NAMES[i] for i in range(4) if i != mu]
            row = {"mu": QUEUE_NAMES[mu], "threshold": t}
            row.update(dict(zip(names, others)))
            rows.append(row)
        return rows


class SwitchingCurveError(RuntimeError):
    def __init__(self, msg, curve):
        super().__init__(msg)
        self.curve = curve


def extract_switching_curve(policy: PolicyTable, strict: bool = True) -> SwitchingCurve:
    F = policy.space.safe_max
    c = policy.costs
    from .schedulers import RegionLabel, classify_region

    thresholds, violations = {}, []
    for mu in range(4):
        s = 0 if mu in (0, 3) else 1
        sopt = (policy.optimal >> s) & 1 == 1
        rest = [i for i in range(4) if i != mu]
        for others in itertools.product(range(F + 1), repeat=3):
            pat = np.zeros(4, dtype=np.int64)
            pat[mu] = 1
            pat[rest] = np.minimum(others, 1)
            if classify_region(pat.reshape(2, 2), c) != RegionLabel.CRITICAL_BOUNDARY:
                continue
            idx = [0] * 4
            for i, v in zip(rest, others):
                idx[i] = v
            idx[mu] = slice(1, F + 1)
            line = sopt[tuple(idx)]
            hits = np.flatnonzero(line)
            t = int(hits[0]) + 1 if hits.size else None
            if hits.size and not line[hits[0]:].all():
                violations.append({"mu": QUEUE_NAMES[mu], "others": others, "pattern": line.astype(int).tolist()})
            thresholds[(mu, tuple(int(v) for v in others))] = t
    curve = SwitchingCurve(thresholds, F, violations)
    if strict and violations:
        raise SwitchingCurveError(f"{len(violations)} non-monotone slices, first: {violations[0]}", curve)
    return curve


# ---------------------------------------------------------------- policy evaluation

def policy_reward_value(policy: PolicyTable, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """J~(q) = E sum beta^t r(q(t), s(t)) for the table policy on the clamped chain."""
    beta = policy.beta
    q_max = policy.space.q_max
    pmf4 = policy.arrivals.pmf.reshape(4, -1)
    rewards = _reward_tables(policy.costs, q_max, False)
    act = policy.action
    r = np.where(act == 0, rewards[0], rewards[1])
    idx_down = np.maximum(np.arange(q_max + 1) - 1, 0)
    J = np.zeros(policy.space.shape)
    stop = tol * (1 - beta) / beta
    for _ in range(max_iter):
        W = expected_next(J, pmf4, q_max)
        nxt = []
        for s in SCHEDULES:
            Ws = W
            for ax in range(4):
                if s[ax]:
                    Ws = np.take(Ws, idx_down, axis=ax)
            nxt.append(Ws)
        Jn = r + beta * np.where(act == 0, nxt[0], nxt[1])
        delta = np.max(np.abs(Jn - J))
        J = Jn
        if delta < stop:
            return J
    raise ConvergenceError(f"policy evaluation did not converge; last delta {delta:.3e}", delta)


def cost_value_from_reward_value(Jr: np.ndarray, policy: PolicyTable) -> np.ndarray:
    """(1 - beta) J = c.q0 + g - beta J~, with g = beta/(1-beta) sum c lambda."""
    beta = policy.beta
    c = np.asarray(policy.costs, float).reshape(4)
    g = beta / (1 - beta) * float(np.sum(c * policy.arrivals.mean.reshape(4)))
    cq = np.tensordot(c, np.indices(policy.space.shape), axes=(0, 0))
    return (cq + g - beta * Jr) / (1 - beta)


def discounted_value_of_policy(policy: PolicyTable, q0, tol: float = 1e-10) -> float:
    Jr = policy_reward_value(policy, tol)
    J = cost_value_from_reward_value(Jr, policy)
    return float(J[_as_state(q0)])
