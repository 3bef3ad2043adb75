"""Command-line interface.

Subcommands: solve-rho, simulate (rwsbi | poisson), couple (upper | lower |
two-walk), correlate, verify.  All delimited output is UTF-8 CSV with a
mandatory header row; the full configuration and seed are echoed as
# comments above the header.  RWSBI_OUT_DIR overrides the output directory.
Passing --plot renders a figure next to each CSV.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import couplings as cpl
from . import experiments as X
from . import heat as H
from . import particles as P
from . import vacancy as V
from .kernels import builtin_kernel, load_kernel


def _kernel(spec: str):
    try:
        return builtin_kernel(spec)
    except KeyError:
        return load_kernel(spec)


def _out_path(args, default_name):
    base = Path(args.out) if args.out else None
    if base is None:
        out_dir = Path(getattr(args, "out_dir", "") or
                       __import__("os").environ.get("RWSBI_OUT_DIR", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        base = out_dir / default_name
    else:
        base.parent.mkdir(parents=True, exist_ok=True)
    return base


def _write_csv(path, header_pairs, columns, rows):
    lines = [f"# {k} = {v}" for k, v in header_pairs]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def cmd_solve_rho(args):
    kernel = _kernel(args.kernel)
    params = H.HeatParams(gamma=args.gamma, alpha=args.alpha, kernel=kernel)
    snaps = sorted(set(np.geomspace(max(args.t_max / 1e4, 0.01), args.t_max, 60).tolist()
                       + [args.t_max]))
    sol = H.solve_rho(params, args.t_max, radius=args.radius, tol=args.tol,
                      snapshot_times=snaps)
    rows = []
    for t in snaps:
        s, i, _ = H.total_mass(sol, t)
        ar = H.asymptotic_rho0(t, params) if t > math.e else ""
        aR = H.asymptotic_R(t, params) if t > 1.0 else ""
        rows.append((t, float(sol.rho0_at(t)), s, i, ar, aR))
    path = _out_path(args, "solve_rho.csv")
    _write_csv(path, [("command", "solve-rho"), ("gamma", args.gamma),
                      ("alpha", args.alpha), ("kernel", args.kernel),
                      ("t_max", args.t_max), ("radius", sol.radius),
                      ("tol", args.tol), ("boundary_leak", sol.boundary_leak)],
               ["t", "rho0", "R_sum", "R_integral", "asym_rho0", "asym_R"], rows)
    if args.plot:
        from . import plotting
        print("wrote", plotting.plot_rho_solution(sol, plotting.fig_path(path)))
    return 0


def cmd_simulate(args):
    kernel = _kernel(args.kernel)
    snaps = [float(s) for s in args.snapshots.split(",")] if args.snapshots else [args.t_max]
    header = [("command", f"simulate {args.system}"), ("gamma", args.gamma),
              ("epsilon", args.epsilon), ("sign", args.sign),
              ("kernel", args.kernel), ("t_max", args.t_max),
              ("seed", args.seed), ("replicas", args.replicas)]
    sched = None
    if args.system == "poisson":
        params = H.HeatParams(gamma=args.gamma, alpha=1.0, kernel=kernel)
        sol = H.solve_rho(params, args.t_max, tol=1e-9)
        sched = P.ImmigrationSchedule.tuned(args.sign, args.epsilon, args.gamma, sol)
    rows = []
    profile_rows = []
    totals = []
    for rep in range(args.replicas):
        if args.system == "rwsbi":
            res = P.simulate_rwsbi(args.gamma, kernel, args.t_max, seed=args.seed,
                                   stream_id=rep, snapshot_times=snaps)
        else:
            res = P.simulate_poisson_system(sched, kernel, args.t_max, seed=args.seed,
                                            stream_id=rep, snapshot_times=snaps)
        for snap in res.snapshots:
            rows.append((rep, snap.t, snap.count_total, snap.origin_count,
                         res.snapshot_vacancy[snap.t]))
        totals.append(res.snapshots[-1].count_total)
        if args.profile_out:
            final = res.snapshots[-1]
            for x in sorted(final.occupancy):
                profile_rows.append((rep, final.t, x, final.occupancy[x]))
    path = _out_path(args, f"simulate_{args.system}.csv")
    _write_csv(path, header,
               ["replica", "t", "total_count", "origin_count", "vacant_time_0_t"], rows)
    if args.profile_out:
        _write_csv(Path(args.profile_out), header, ["replica", "t", "x", "count"],
                   profile_rows)
    if args.plot:
        from . import plotting
        print("wrote", plotting.plot_replica_counts(
            totals, plotting.fig_path(path),
            title=f"{args.system} totals at t={args.t_max:g}"))
    return 0


def cmd_couple(args):
    kernel = _kernel(args.kernel)
    header = [("command", f"couple {args.construction}"), ("epsilon", args.epsilon),
              ("gamma", args.gamma), ("kernel", args.kernel), ("seed", args.seed)]
    if args.construction == "two-walk":
        rows = []
        ests, ses, x0s = [], [], []
        for x0 in [int(x) for x in str(args.x0).split(",")]:
            out = cpl.coupling_success_prob(x0, kernel, args.replicas, seed=args.seed,
                                            stream_id=x0, max_events=args.max_events)
            rows.append((x0, args.replicas, out["n_success"], out["n_fail"],
                         out["n_undecided"], out["n_forced"],
                         f"{out['estimate']:.6f}", f"{out['se']:.6f}"))
            x0s.append(x0)
            ests.append(out["estimate"])
            ses.append(out["se"])
        path = _out_path(args, "couple_two_walk.csv")
        _write_csv(path, header + [("replicas", args.replicas)],
                   ["x0", "trials", "successes", "failures", "undecided", "forced",
                    "estimate", "se"], rows)
        if args.plot:
            from . import plotting
            print("wrote", plotting.plot_coupling_success(
                x0s, ests, ses, plotting.fig_path(path)))
        return 0

    params = H.HeatParams(gamma=args.gamma, alpha=1.0, kernel=kernel)
    if args.construction == "upper":
        T = args.t_max or 100.0
        sol = H.solve_rho(params, T + 1.0, tol=1e-9)
        rows = []
        for rep in range(args.replicas):
            out = cpl.simulate_upper_coupling(args.epsilon, args.gamma, kernel, T,
                                              seed=args.seed, rho_solution=sol,
                                              stream_id=rep)
            st = out["states"][-1]
            rows.append((rep, st.t, st.eta_total, st.tilde_total, st.hat_total,
                         out["hat_additions"], f"{out['tilde_vacancy']:.6f}"))
        path = _out_path(args, "couple_upper.csv")
        _write_csv(path, header + [("t_max", T), ("replicas", args.replicas)],
                   ["replica", "t", "eta_total", "tilde_total", "hat_total",
                    "hat_additions", "tilde_vacancy"], rows)
        if args.plot:
            from . import plotting
            print("wrote", plotting.plot_replica_counts(
                [r[2] for r in rows], plotting.fig_path(path),
                title=f"coupled true-system totals at t={T:g}"))
        return 0

    n_max = args.n_max or 2000
    grid = cpl.build_time_grid(args.epsilon, n_max)
    sol = H.solve_rho(params, float(grid.t[-1]) + 1.0, tol=1e-9)
    out = cpl.simulate_lower_coupling(args.epsilon, args.gamma, kernel, n_max,
                                      seed=args.seed, rho_solution=sol)
    rows = [
        (b.n, b.t_hat < math.inf, b.t_tilde < math.inf, b.e, b.m_tilde, b.cum_e)
        for b in out["blocks"]
    ]
    path = _out_path(args, "couple_lower.csv")
    _write_csv(path, header + [("n_max", n_max)],
               ["n", "t_hat_finite", "t_tilde_finite", "e_n", "m_tilde_n", "cum_e"],
               rows)
    if args.plot:
        from . import plotting
        print("wrote", plotting.plot_lower_blocks(out["blocks"], plotting.fig_path(path)))
    return 0


def cmd_correlate(args):
    spec = V.parse_spec_file(args.spec)
    if args.mode == "exact":
        val = V.correlation_exact(spec)
        print(f"k = {spec.k}  exact = {val!r}")
    elif args.mode == "series":
        val, bound = V.correlation_series(spec, args.M)
        pref = math.exp(-spec.singleton_sum())
        print(f"k = {spec.k}  series(M={args.M}) = {val!r}  "
              f"|error| <= {pref * bound:.3e}")
    else:
        est, se = V.correlation_montecarlo(spec, args.replicas, seed=args.seed)
        print(f"k = {spec.k}  mc = {est!r} +- {se:.3e} ({args.replicas} replicas)")
    return 0


def cmd_verify(args):
    cfg = X.ExperimentConfig.from_file(args.config) if args.config else X.ExperimentConfig()
    cfg.suite = args.suite
    for key in ("kernel", "gamma", "alpha", "epsilon", "sign", "t_max", "n_max",
                "replicas", "seed", "out_dir"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    cfg.plot = bool(args.plot)
    try:
        records = X.run_suite(cfg)
    except X.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = cfg.resolve_out_dir()
    width = max(len(f"{r.suite}:{r.check}") for r in records)
    n_pass = 0
    for r in records:
        mark = "PASS" if r.passed else "FAIL"
        n_pass += r.passed
        print(f"[{mark}] {r.suite + ':' + r.check:<{width}}  value={r.value}  "
              f"expected: {r.expected}  ({r.wall_clock:.1f}s)")
    path = out_dir / f"verify_{cfg.suite}.csv"
    X.write_records_csv(records, path, cfg)
    print(f"{n_pass}/{len(records)} checks passed; wrote {path}")
    if cfg.plot:
        from . import plotting
        print("wrote", plotting.plot_verify_records(records, plotting.fig_path(path)))
        for r in records:
            if r.suite == "profile" and "solution" in r.extra:
                p = out_dir / "verify_profiles.png"
                plotting.plot_profiles(r.extra["solution"], r.extra["snaps"], p,
                                       r.extra["ygrid"])
                print("wrote", p)
            if r.suite == "asymptotics" and "solution" in r.extra:
                p = out_dir / "verify_asymptotics.png"
                plotting.plot_rho_solution(r.extra["solution"], p)
                print("wrote", p)
            if r.suite == "couplings" and "blocks" in r.extra:
                p = out_dir / "verify_lower_blocks.png"
                plotting.plot_lower_blocks(r.extra["blocks"], p)
                print("wrote", p)
            if r.check == "count_over_R_bracket" and r.replica_values is not None:
                p = out_dir / "verify_growth.png"
                plotting.plot_replica_counts(r.replica_values, p, reference=1.0,
                                             title="count / R_ODE at T")
                print("wrote", p)
    return 0 if n_pass == len(records) else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="rwsbi",
                                 description="self-blocking immigration lab")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("solve-rho", help="solve the lattice density equation")
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--kernel", default="ssrw")
    sp.add_argument("--t-max", type=float, required=True)
    sp.add_argument("--radius", type=int, default=None)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--out", default=None)
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(fn=cmd_solve_rho)

    sp = sub.add_parser("simulate", help="run particle systems")
    sp.add_argument("system", choices=["rwsbi", "poisson"])
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--sign", choices=["+", "-"], default="+")
    sp.add_argument("--kernel", default="ssrw")
    sp.add_argument("--t-max", type=float, required=True)
    sp.add_argument("--seed", type=int, default=20260810)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--snapshots", default=None, help="comma-separated times")
    sp.add_argument("--out", default=None)
    sp.add_argument("--profile-out", default=None,
                    help="side CSV of x,count occupancy rows at the final time")
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("couple", help="coupling constructions")
    sp.add_argument("construction", choices=["upper", "lower", "two-walk"])
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--kernel", default="ssrw")
    sp.add_argument("--t-max", type=float, default=None)
    sp.add_argument("--n-max", type=int, default=None)
    sp.add_argument("--x0", default="10", help="start offset(s), comma-separated")
    sp.add_argument("--replicas", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=20260810)
    sp.add_argument("--max-events", type=int, default=1_000_000)
    sp.add_argument("--out", default=None)
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(fn=cmd_couple)

    sp = sub.add_parser("correlate", help="k-event vacancy correlations")
    sp.add_argument("--spec", required=True, help="spec file: lines 'I:1,2 = value'")
    sp.add_argument("--mode", choices=["exact", "series", "mc"], default="exact")
    sp.add_argument("--M", type=int, default=4)
    sp.add_argument("--replicas", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=20260810)
    sp.set_defaults(fn=cmd_correlate)

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("--suite", required=True,
                    help=f"one of: {', '.join(X.suite_names())}")
    sp.add_argument("--config", default=None, help="key = value config file")
    sp.add_argument("--kernel", default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--sign", default=None)
    sp.add_argument("--t-max", type=float, default=None, dest="t_max")
    sp.add_argument("--n-max", type=int, default=None, dest="n_max")
    sp.add_argument("--replicas", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out-dir", default=None, dest="out_dir")
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
