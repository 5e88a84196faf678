"""Monte Carlo simulation of the switch under a scheduling policy.

All replications advance together as a (R, n, n) state array. Replication r
draws arrivals and tie-break uniforms from its own streams, derived from
SeedSequence(seed, spawn_key=(r,)), so any single replication can be rerun
alone and two policies run with the same seed see identical arrivals.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import (Admissibility, ArrivalProcess, SwitchConfig, arrivals_from_uniforms,
                   check_admissible_rates, discounted_horizon)
from .heavy_traffic import heavy_traffic_limit, universal_lower_bound
from .schedulers import Policy

BLOCK = 4096


@dataclass
class SimSpec:
    config: SwitchConfig
    policy: Policy
    horizon: int
    warmup: int = 0
    replications: int = 1
    seed: int = 0
    beta: float | None = None
    q0: np.ndarray | None = None
    sample_every: int = 0  # keep a copy of q every this many post-warmup slots (0 = never)

    def __post_init__(self):
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        n = self.config.n
        self.q0 = np.zeros((n, n), dtype=np.int64) if self.q0 is None else np.asarray(self.q0, np.int64).reshape(n, n)
        if (self.q0 < 0).any():
            raise ValueError("initial queues must be nonnegative")

    def settings(self) -> dict:
        """Everything except the policy, used to check common random numbers."""
        return {
            "n": self.config.n,
            "costs": np.asarray(self.config.costs).tolist(),
            "arrivals": self.config.arrivals.to_dict(),
            "horizon": self.horizon,
            "warmup": self.warmup,
            "replications": self.replications,
            "seed": self.seed,
            "beta": self.beta,
            "q0": self.q0.tolist(),
        }

    def settings_hash(self) -> str:
        d = dict(self.settings(), policy=self.policy.name)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TraceStats:
    avg_cost: float  # post-warmup time average of sum c_ij q_ij
    discounted: float  # sum_{t<T} beta^t sum c_ij q_ij(t) (nan without beta)
    avg_unused: float  # post-warmup time average of sum U_ij
    queue_means: np.ndarray  # post-warmup time averages per queue
    final_q: np.ndarray
    samples: np.ndarray  # sampled post-warmup states, shape (m, n, n)


def _streams(seed: int, r: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(seed, spawn_key=(r,))
    a, t = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(t)


def simulate(spec: SimSpec, reps: list[int] | None = None) -> list[TraceStats]:
    """Run the listed replications (default all) side by side."""
    reps = list(range(spec.replications)) if reps is None else list(reps)
    R, n = len(reps), spec.config.n
    cfg, pol = spec.config, spec.policy
    c = np.asarray(cfg.costs)
    streams = [_streams(spec.seed, r) for r in reps]
    q = np.broadcast_to(spec.q0, (R, n, n)).copy()
    T, W = spec.horizon, spec.warmup
    acc_cost = np.zeros(R)
    acc_unused = np.zeros(R)
    acc_q = np.zeros((R, n, n))
    disc = np.zeros(R)
    disc_w = 1.0
    samples = []
    for b0 in range(0, T, BLOCK):
        B = min(BLOCK, T - b0)
        ua = np.stack([g.random((B, n, n)) for g, _ in streams], 1)  # (B, R, n, n)
        ut = np.stack([g.random(B) for _, g in streams], 1)  # (B, R)
        A = arrivals_from_uniforms(cfg.arrivals, ua)
        for i in range(B):
            t = b0 + i
            cost = (q * c).sum((1, 2))
            if spec.beta is not None:
                disc += disc_w * cost
                disc_w *= spec.beta
            s = pol.select(q, ut[i])
            busy = q > 0
            if t >= W:
                acc_cost += cost
                acc_q += q
                acc_unused += (s * ~busy).sum((1, 2))
                if spec.sample_every and (t - W) % spec.sample_every == 0:
                    samples.append(q.copy())
            q = q + A[i] - s * busy
    m = T - W
    smp = np.stack(samples, 1) if samples else np.zeros((R, 0, n, n), dtype=np.int64)
    return [TraceStats(float(acc_cost[r] / m),
                       float(disc[r]) if spec.beta is not None else math.nan,
                       float(acc_unused[r] / m), acc_q[r] / m, q[r].copy(), smp[r])
            for r in range(R)]


def run_trace(spec: SimSpec, replication: int) -> TraceStats:
    return simulate(spec, [replication])[0]


# ---------------------------------------------------------------- estimates

@dataclass
class SimEstimate:
    estimate: float
    half_width: float
    R: int
    values: np.ndarray = field(repr=False)
    warning: str | None = None

    @property
    def ci_low(self) -> float:
        return self.estimate - self.half_width

    @property
    def ci_high(self) -> float:
        return self.estimate + self.half_width

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "half_width": self.half_width, "R": self.R, "warning": self.warning}


def t_interval(values, level: float = 0.95) -> tuple[float, float]:
    v = np.asarray(values, float)
    mean = float(v.mean())
    if len(v) < 2:
        return mean, math.inf
    sd = float(v.std(ddof=1))
    return mean, float(stats.t.ppf(0.5 + level / 2, len(v) - 1) * sd / math.sqrt(len(v)))


def estimate_from(values, warning=None) -> SimEstimate:
    m, h = t_interval(values)
    return SimEstimate(m, h, len(values), np.asarray(values, float), warning)


def _require_stable(cfg: SwitchConfig):
    chk = check_admissible_rates(cfg.arrivals.mean)
    if chk.status != Admissibility.STABLE:
        raise ValueError(f"arrival rates are {chk.status.value} (max port load {chk.max_load:.4f}); "
                         "long-run averages are undefined")


def steady_state_defaults(eps: float) -> tuple[int, int]:
    """(warmup, horizon) = (max(1e4, 50/eps), 10 * warmup)."""
    W = int(max(1e4, math.ceil(50 / eps)))
    return W, 10 * W


def long_run_average(spec: SimSpec, traces: list[TraceStats] | None = None) -> SimEstimate:
    _require_stable(spec.config)
    traces = simulate(spec) if traces is None else traces
    return estimate_from([t.avg_cost for t in traces])


def discounted_total(spec: SimSpec, traces: list[TraceStats] | None = None) -> SimEstimate:
    if spec.beta is None:
        raise ValueError("discounted_total needs beta")
    traces = simulate(spec) if traces is None else traces
    vals = [t.discounted for t in traces]
    c = np.asarray(spec.config.costs)
    # tail beyond T under a frozen final state plus arrivals: beta^T/(1-beta) * (c.q_T + t-growth bound)
    b = spec.beta
    lam_c = float((c * spec.config.arrivals.mean).sum())
    tail = np.mean([b ** spec.horizon * ((c * t.final_q).sum() / (1 - b) + lam_c * b / (1 - b) ** 2)
                    for t in traces])
    warning = None
    est = estimate_from(vals)
    chk = check_admissible_rates(spec.config.arrivals.mean)
    if chk.status != Admissibility.STABLE:
        warning = f"rates are {chk.status.value}; tail bound not verifiable"
    elif est.estimate > 0 and tail > 0.01 * est.estimate:
        warning = f"estimated tail {tail:.3g} exceeds 1% of the estimate"
    est.warning = warning
    return est


@dataclass
class GapEstimate:
    gap: float  # (A - B) / B * 100
    half_width: float
    mean_a: float
    mean_b: float
    R: int

    @property
    def ci_low(self):
        return self.gap - self.half_width

    @property
    def ci_high(self):
        return self.gap + self.half_width

    def to_dict(self):
        return {"gap": self.gap, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "mean_a": self.mean_a, "mean_b": self.mean_b, "R": self.R}


def gap_from_values(a, b) -> GapEstimate:
    a, b = np.asarray(a, float), np.asarray(b, float)
    mb = b.mean()
    _, h = t_interval(a - b) if len(a) > 1 else (0.0, 0.0)
    if mb == 0:
        return GapEstimate(0.0 if a.mean() == 0 else math.inf, 0.0, float(a.mean()), 0.0, len(a))
    return GapEstimate(float((a.mean() - mb) / mb * 100), float(h / mb * 100), float(a.mean()), float(mb), len(a))


def compare_policies(spec_a: SimSpec, spec_b: SimSpec, statistic: str = "auto") -> GapEstimate:
    """Relative gap (A - B)/B x 100 under common random numbers."""
    if spec_a.settings() != spec_b.settings():
        raise ValueError("compare_policies needs identical configurations and seeds")
    if statistic == "auto":
        statistic = "discounted" if spec_a.beta is not None else "avg_cost"
    if statistic == "avg_cost":
        _require_stable(spec_a.config)
    ta, tb = simulate(spec_a), simulate(spec_b)
    return gap_from_values([getattr(t, statistic) for t in ta], [getattr(t, statistic) for t in tb])


# ---------------------------------------------------------------- heavy traffic

@dataclass
class SweepRow:
    eps: float
    scaled: SimEstimate  # eps * E[sum c q]
    mean_cost: SimEstimate  # E[sum c q]
    unused: SimEstimate  # per-slot E[sum U]
    limit: float
    ulb: float
    samples: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"eps": self.eps, "scaled": self.scaled.estimate, "scaled_ci": [self.scaled.ci_low, self.scaled.ci_high],
                "mean_cost": self.mean_cost.estimate, "mean_cost_half_width": self.mean_cost.half_width,
                "unused": self.unused.estimate, "unused_ci": [self.unused.ci_low, self.unused.ci_high],
                "limit": self.limit, "ulb": self.ulb}


def heavy_traffic_sweep(nu, eps_list, policy_factory, costs=None, replications: int = 20, seed: int = 0,
                        warmup: int | None = None, horizon: int | None = None, sample_every: int = 0) -> list[SweepRow]:
    """Steady-state weighted queue length along lambda = (1 - eps) nu with Bernoulli arrivals.

    ``policy_factory(config)`` builds the policy for each eps.
    """
    nu = np.asarray(nu, float)
    n = nu.shape[0]
    if not (np.allclose(nu.sum(0), 1, atol=1e-12) and np.allclose(nu.sum(1), 1, atol=1e-12)) or (nu <= 0).any():
        raise ValueError("nu must be positive with all row and column sums equal to 1")
    c = np.ones((n, n)) if costs is None else np.asarray(costs, float)
    limit = heavy_traffic_limit(nu * (1 - nu), c)
    rows = []
    for eps in eps_list:
        lam = (1 - eps) * nu
        cfg = SwitchConfig(n, c, ArrivalProcess.bernoulli(lam))
        W, T = steady_state_defaults(eps)
        W = warmup if warmup is not None else W
        T = horizon if horizon is not None else T
        spec = SimSpec(cfg, policy_factory(cfg), T, W, replications, seed, sample_every=sample_every)
        traces = simulate(spec)
        mc = long_run_average(spec, traces)
        scaled = estimate_from(eps * mc.values)
        unused = estimate_from([t.avg_unused for t in traces])
        sig = cfg.arrivals.var
        ulb = universal_lower_bound(sig, eps, n, c)
        smp = np.concatenate([t.samples for t in traces]) if sample_every else None
        rows.append(SweepRow(float(eps), scaled, mc, unused, limit, ulb, smp))
    return rows
