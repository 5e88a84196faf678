"""Command-line front end: ``switchsched <simulate|solve|verify|ht|reproduce>``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, load_preset
from .core import check_admissible_rates, discounted_horizon
from .heavy_traffic import (closed_form_2x2, heavy_traffic_limit, heavy_traffic_limit_c_weighted,
                            matrix_limit, ssc_diagnostic, universal_lower_bound, zeta_2x2, zeta_general)
from .mdp import (PolicyTable, ValueFunction, check_structure, extract_switching_curve, stopping_threshold,
                  value_iteration, verify_inequalities)
from .schedulers import parse_policy
from .sim import (SimSpec, estimate_from, gap_from_values, heavy_traffic_sweep, simulate,
                  steady_state_defaults)

ZETA_GATE = 1e-9


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("SWITCHSCHED_THREADS")
    return int(env) if env else 1


def _out_dir(cfg: ExperimentConfig, arg: str | None) -> Path:
    out = Path(arg or cfg.out or f"out/{cfg.id}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(cfg: ExperimentConfig, out: Path, extra: dict) -> None:
    d = {"toolkit_version": __version__, "config": cfg.model_dump(mode="json"), "runtime": extra}
    (out / "config.resolved.json").write_text(json.dumps(d, indent=2, sort_keys=True))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


# ---------------------------------------------------------------- simulate

def run_simulation(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    param = cfg.sweep.param if cfg.sweep else None
    values = cfg.sweep.values if cfg.sweep else [None]
    stat = "avg_cost" if cfg.mode == "average" else "discounted"
    beta = cfg.simulation.beta
    cache = {}
    csv_rows, summary, fig_rows, runtime = [], [], [], {"threads": threads, "runs": []}

    for v in values:
        rate = v if param == "lambda" else None
        sc = cfg.switch_config(rate)
        chk = check_admissible_rates(sc.arrivals.mean)
        if cfg.mode == "average":
            W0, T0 = steady_state_defaults(max(1e-6, 1 - chk.max_load))
            W = cfg.simulation.warmup if cfg.simulation.warmup is not None else W0
            T = cfg.simulation.horizon if cfg.simulation.horizon is not None else T0
        else:
            W, T = 0, cfg.simulation.horizon or discounted_horizon(beta)
        per_policy = {}
        for p in cfg.policies:
            pstr = p.replace("{k}", str(int(v))) if param == "k" else p
            key = (pstr, rate)
            if key not in cache:
                spec = SimSpec(sc, parse_policy(pstr, sc, beta), T, W, cfg.simulation.replications, cfg.seed,
                               beta if cfg.mode == "discounted" else None, cfg.simulation.q0)
                if cfg.mode == "average" and chk.status.value != "stable":
                    raise ValueError(f"rates at {param}={v} are {chk.status.value}; refusing long-run average")
                traces = simulate(spec)
                cache[key] = (spec, traces)
                runtime["runs"].append({"policy": pstr, param or "param": v, "horizon": T, "warmup": W,
                                        "settings_hash": spec.settings_hash()})
            spec, traces = cache[key]
            vals = np.array([getattr(t, stat) for t in traces])
            est = estimate_from(vals)
            per_policy[p] = vals
            for r, t in enumerate(traces):
                csv_rows.append([cfg.id, pstr, param or "", "" if v is None else v, r, stat, getattr(t, stat)])
                csv_rows.append([cfg.id, pstr, param or "", "" if v is None else v, r, "unused_service", t.avg_unused])
            summary.append({"policy": pstr, "param": param, "value": v, "statistic": stat,
                            **est.to_dict(), "settings_hash": spec.settings_hash()})
            fig_rows.append([pstr, "" if v is None else v, est.estimate, est.ci_low, est.ci_high])
        if cfg.baseline:
            for p in cfg.policies:
                if p == cfg.baseline:
                    continue
                g = gap_from_values(per_policy[p], per_policy[cfg.baseline])
                summary.append({"policy": p.replace("{k}", str(int(v))) if param == "k" else p,
                                "baseline": cfg.baseline.replace("{k}", str(int(v))) if param == "k" else cfg.baseline,
                                "param": param, "value": v, "statistic": "relative_gap_percent",
                                "estimate": g.gap, "ci_low": g.ci_low, "ci_high": g.ci_high})

    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["experiment_id", "policy", "param_name", "param_value", "replication", "statistic", "value"])
        w.writerows(csv_rows)
    with open(out / "figure.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "x", "mean", "ci_low", "ci_high"])
        w.writerows(fig_rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    _write_resolved(cfg, out, runtime)
    _print_summary(cfg, summary)
    return 0


def _print_summary(cfg: ExperimentConfig, summary: list[dict]) -> None:
    print(f"experiment {cfg.id} ({cfg.mode})")
    for row in summary:
        if row["statistic"] == "relative_gap_percent":
            continue
        print(f"  {row['param'] or '':>6} {row['value'] if row['value'] is not None else '':>6}  "
              f"{row['policy']:<22} {row['estimate']:12.4f}  [{row['ci_low']:.4f}, {row['ci_high']:.4f}]")
    gaps = [r for r in summary if r["statistic"] == "relative_gap_percent"]
    if gaps:
        print("relative gap (policy - baseline) / baseline x 100")
        refs = cfg.reference_gaps or []
        for i, r in enumerate(gaps):
            ref = f"   reference {refs[i]:7.2f}" if i < len(refs) and len(gaps) == len(refs) else ""
            print(f"  {r['param'] or '':>6} {r['value'] if r['value'] is not None else '':>6}  {r['policy']:<22} "
                  f"{r['estimate']:8.2f}  [{r['ci_low']:.2f}, {r['ci_high']:.2f}]{ref}")


# ---------------------------------------------------------------- solve

def run_solve(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    sc = cfg.switch_config()
    s = cfg.solve
    q_max = s.q_max
    if q_max is None:
        q_max = 30 if float(np.max(sc.arrivals.mean)) <= 0.45 + 1e-12 else 50
    tol = s.tol
    if s.eps_target is not None:
        tol = stopping_threshold(s.eps_target, s.beta)
    if tol is None and s.max_k is None:
        tol = 1e-9
    V, pol = value_iteration(sc, s.beta, q_max, max_k=s.max_k, tol=tol, exact=s.exact, keep=tuple(s.keep))
    V.save(out / "value.npz")
    pol.save(out / "policy.npz")
    for k, Vk in sorted(V.snapshots.items()):
        Vk.save(out / f"value_k{k}.npz")
    curve = extract_switching_curve(pol, strict=False)
    with open(out / "switching_curve.csv", "w", newline="") as fh:
        rows = curve.to_rows()
        w = csv.DictWriter(fh, fieldnames=["mu", "q11", "q12", "q21", "q22", "threshold"])
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k, "")) for k in w.fieldnames})
    st = check_structure(pol)
    summary = {
        "k": V.k, "converged": bool(getattr(V, "converged", False)), "tol": tol,
        "last_delta": V.deltas[-1] if V.deltas else None, "Q_max": q_max, "beta": s.beta,
        "structure": {"trivial_checked": st.trivial_checked, "trivial_failures": st.trivial_failures,
                      "interior_checked": st.interior_checked, "interior_failures": st.interior_failures,
                      "s1_checked": st.s1_checked, "s1_failures": st.s1_failures},
        "switching_curve_violations": curve.violations[:10],
    }
    (out / "solve.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    _write_resolved(cfg, out, {"threads": threads, "Q_max": q_max, "tol": tol})
    print(f"value iteration: k={V.k} last delta={summary['last_delta']:.3e} Q_max={q_max}")
    print(f"structure: trivial {st.trivial_checked} checked / {len(st.trivial_failures)} failures, "
          f"interior {st.interior_checked} / {len(st.interior_failures)}, S1 {st.s1_checked} / {len(st.s1_failures)}; "
          f"curve violations {len(curve.violations)}")
    return 0 if st.passed and not curve.violations else 1


# ---------------------------------------------------------------- verify

def run_verify(path: str, out: str | None, exact: bool) -> int:
    V = ValueFunction.load(path)
    if exact and not V.exact:
        if V.space.q_max > 10:
            raise ValueError("exact-rational verification is limited to Q_max <= 10")
        W, _ = value_iteration(V.config, V.beta, V.space.q_max, max_k=V.k, exact=True)
        if np.max(np.abs(W.values.astype(float) - V.values)) > 1e-6 * max(1.0, np.abs(V.values).max()):
            print("warning: stored values differ from the exact recomputation", file=sys.stderr)
        V = W
    rep = verify_inequalities(V)
    print(f"value function k={V.k}, Q_max={V.space.q_max}, beta={V.beta}, exact={V.exact}")
    print(rep.table())
    for r in rep.results:
        if r.violations:
            print(f"  {r.name}: first counterexamples {r.counterexamples[:3]}")
    target = Path(out) / "verify.json" if out else Path(path).with_suffix(".verify.json")
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(rep.to_dict(), indent=2, default=_json_default))
    print("PASS" if rep.passed else f"FAIL ({rep.total_violations} violations)")
    return 0 if rep.passed else 1


# ---------------------------------------------------------------- ht

def run_ht(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    n = cfg.switch.n
    c = np.broadcast_to(np.asarray(cfg.switch.costs, float), (n, n)).copy()
    nu = np.full((n, n), 1.0 / n) if cfg.ht.nu is None else np.asarray(cfg.ht.nu, float)
    sigma2 = nu * (1 - nu)
    zg = zeta_general(c)
    rec = {"c": c, "nu": nu, "sigma2": sigma2, "zeta": zg,
           "limit_basis": heavy_traffic_limit(sigma2, c), "limit_matrix": matrix_limit(sigma2, c),
           "limit_c_weighted_form": heavy_traffic_limit_c_weighted(sigma2, c)}
    gates = []
    if n == 2:
        z2 = zeta_2x2(c)
        rec["zeta_2x2"] = z2
        rec["closed_form_2x2"] = closed_form_2x2(sigma2, c)
        gates.append(("zeta_2x2 vs zeta_general", float(np.max(np.abs(z2 - zg)))))
    gates.append(("limit_basis vs limit_matrix", abs(rec["limit_basis"] - rec["limit_matrix"])))
    rec["gates"] = [{"name": g, "max_abs_diff": d, "status": "PASS" if d <= ZETA_GATE else "FAIL"} for g, d in gates]
    rec["ulb"] = {str(e): universal_lower_bound((1 - e) * nu * (1 - (1 - e) * nu), e, n, c) for e in cfg.ht.eps}
    rows = []
    if cfg.ht.replications > 0:
        sweep = heavy_traffic_sweep(nu, cfg.ht.eps, lambda sc: parse_policy(cfg.ht.policy, sc), c,
                                    cfg.ht.replications, cfg.seed, cfg.ht.warmup, cfg.ht.horizon,
                                    cfg.ht.ssc_sample_every)
        rows = [r.to_dict() for r in sweep]
        rec["sweep"] = rows
        if cfg.ht.ssc_sample_every:
            ssc = ssc_diagnostic({r.eps: r.samples for r in sweep}, c)
            rec["ssc"] = [vars(s) for s in ssc]
        with open(out / "ht_sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "scaled_mean", "ci_low", "ci_high", "limit", "ulb", "unused", "n_eps"])
            for r in sweep:
                w.writerow([r.eps, r.scaled.estimate, r.scaled.ci_low, r.scaled.ci_high, r.limit, r.ulb,
                            r.unused.estimate, n * r.eps])
    (out / "ht.json").write_text(json.dumps(rec, indent=2, default=_json_default))
    _write_resolved(cfg, out, {"threads": threads})
    print(f"zeta = {np.round(zg, 6).tolist()}")
    print(f"limit (basis) = {rec['limit_basis']:.6g}, limit (matrix) = {rec['limit_matrix']:.6g}")
    for g in rec["gates"]:
        print(f"  {g['status']}: {g['name']} max diff {g['max_abs_diff']:.2e}")
    for r in rows:
        print(f"  eps={r['eps']:<6} eps*E[sum c q]={r['scaled']:.4f} [{r['scaled_ci'][0]:.4f}, {r['scaled_ci'][1]:.4f}]"
              f"  limit={r['limit']:.4f}  E[sum c q]={r['mean_cost']:.3f}  ulb={r['ulb']:.3f}"
              f"  unused={r['unused']:.4f} (n*eps={n * r['eps']:.4f})")
    print(f"{len(rows)} sweep rows")
    return 0 if all(g["status"] == "PASS" for g in rec["gates"]) else 1


# ---------------------------------------------------------------- entry

def run_config(cfg: ExperimentConfig, out_arg: str | None, seed: int | None, threads: int) -> int:
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    out = _out_dir(cfg, out_arg)
    if cfg.mode in ("average", "discounted"):
        return run_simulation(cfg, out, threads)
    if cfg.mode == "solve":
        return run_solve(cfg, out, threads)
    return run_ht(cfg, out, threads)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchsched", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads (fallback SWITCHSCHED_THREADS)")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, helptext in (("simulate", "run simulation experiments"), ("solve", "run value iteration"),
                           ("ht", "heavy-traffic geometry and sweep")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True)
    p = sub.add_parser("verify", parents=[common], help="check value-function inequalities")
    p.add_argument("path")
    p.add_argument("--exact-rational", action="store_true", help="recompute the iterate in rational arithmetic")
    p = sub.add_parser("reproduce", parents=[common], help="run a shipped preset")
    p.add_argument("name", choices=["table1", "table2", "figure1", "figure2"])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = _threads(args.threads)
    try:
        if args.cmd == "verify":
            return run_verify(args.path, args.out, args.exact_rational)
        if args.cmd == "reproduce":
            cfg = load_preset(args.name)
        else:
            cfg = load_config(args.config)
            expected = {"simulate": ("average", "discounted"), "solve": ("solve",), "ht": ("heavy-traffic",)}
            if cfg.mode not in expected[args.cmd]:
                raise ConfigError(f"{args.config}: mode {cfg.mode!r} does not match subcommand {args.cmd!r}")
        return run_config(cfg, args.out, args.seed, threads)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
