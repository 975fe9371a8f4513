"""Command line: ``srwalk {enumerate,check,sample,scan,fit}``.

Exit codes: 0 success, 1 a check or equivalence test failed, 2 usage or
validation error.  Options may also come from ``--config FILE`` holding
``key = value`` lines (option names without leading dashes); command-line
flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import warnings
from dataclasses import asdict

from srwalk import records
from srwalk.analysis import ScalingPoint, classify, fit_gamma_windowed, scan
from srwalk.coupling import CouplingField, fit_bounds
from srwalk.model import ModelParams
from srwalk.oracle import (
    WALK_CAP,
    energy_identity_residual,
    enumerate_spins,
    enumerate_walks,
    factorization_residual,
    griffiths_check,
)
from srwalk.sampler import RunPlan, SampleStats, run

EQUIV_RTOL = 1e-10


class UsageError(Exception):
    pass


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _therm(s: str):
    return None if str(s).lower() == "auto" else int(s)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--n", type=int, default=6, help="number of steps N")
    common.add_argument("--alpha", type=float, default=3.5)
    common.add_argument("--beta", type=float, default=1.0)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--epsilon", type=float, default=0.1)

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--n-therm", type=_therm, default=1000, help="integer or 'auto'")
    sampling.add_argument("--n-measure", type=int, default=10_000)
    sampling.add_argument("--stride", type=int, default=1)
    sampling.add_argument("--mix", type=float, default=0.5, help="fraction of cluster moves")
    sampling.add_argument("--start", choices=("ordered", "random"), default="ordered")

    p = argparse.ArgumentParser(prog="srwalk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("enumerate", parents=[common], help="exact walk and spin enumeration")
    c = sub.add_parser("check", parents=[common], help="coupling bounds and exact identities")
    c.add_argument("--exact-n", type=int, default=None, help="size for exact checks (default min(n, 6))")
    c.add_argument("--betas", type=_floats, default=[0.0, 0.5, 1.0, 2.0, 4.0])
    c.set_defaults(n=256)
    sm = sub.add_parser("sample", parents=[common, sampling], help="Monte Carlo estimate of <M^2>")
    sm.set_defaults(n=256)
    s = sub.add_parser("scan", parents=[common, sampling], help="gamma over an (alpha, beta, N) grid")
    s.add_argument("--alphas", type=_floats, default=None)
    s.add_argument("--betas", type=_floats, default=[0.0, 0.05, 0.5, 1.0, 2.0, 5.0])
    s.add_argument("--ns", type=_ints, default=[64, 128, 256, 512, 1024])
    f = sub.add_parser("fit", parents=[common], help="fit gamma to a table of (N, mean, err)")
    f.add_argument("--input", required=True)
    return p


def _load_config(path: str, subparser: argparse.ArgumentParser) -> dict:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_string("[run]\n" + fh.read())
    known = {a.dest: a for a in subparser._actions}
    out = {}
    for key, raw in cp["run"].items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        act = known[dest]
        out[dest] = act.type(raw) if act.type else raw
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_load_config(args.config, sub))
        args = parser.parse_args(argv)
    return args


def config_of(args: argparse.Namespace) -> dict:
    skip = {"out", "format", "config", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _plan(args, seed=None) -> RunPlan:
    return RunPlan(n_therm=args.n_therm, n_measure=args.n_measure, measure_stride=args.stride,
                   update_mix=args.mix, seed=args.seed if seed is None else seed, start=args.start)


def cmd_enumerate(args) -> int:
    p = ModelParams(args.n, args.alpha, args.beta)
    if p.N > WALK_CAP:
        raise UsageError(f"N={p.N} exceeds the walk enumeration cap N <= {WALK_CAP}")
    w = enumerate_walks(p)
    s = enumerate_spins(p)
    diff = abs(w.mean_omega_sq - s.mean_M_sq) / abs(w.mean_omega_sq)
    cfg = config_of(args)
    if args.format == "json":
        text = records.json_text("enumerate", {"walk": w.to_dict(), "spin": s.to_dict(),
                                               "relative_diff": diff}, cfg)
    else:
        rows = [{"kind": r.kind, "N": p.N, "alpha": p.alpha, "beta": p.beta, "log_Z": r.log_Z,
                 "mean_omega_sq": r.mean_omega_sq, "mean_M_sq": r.mean_M_sq,
                 "relative_diff": diff} for r in (w, s)]
        text = records.csv_text("enumerate", ["kind", "N", "alpha", "beta", "log_Z",
                                              "mean_omega_sq", "mean_M_sq", "relative_diff"],
                                rows, cfg)
    _emit(args, text)
    if diff > EQUIV_RTOL:
        print(f"walk/spin mismatch: relative difference {diff:.3e}", file=sys.stderr)
        return 1
    return 0


def cmd_check(args) -> int:
    p = ModelParams(args.n, args.alpha, args.beta)
    c = CouplingField(p)
    fit = fit_bounds(c, args.epsilon)
    n_exact = args.exact_n if args.exact_n is not None else min(p.N, 6)
    if not 1 <= n_exact <= 8:
        raise UsageError("--exact-n must lie in [1, 8]")
    items = []
    items.append(("coupling_positive", fit.negative_couplings == 0 and fit.c1_hat > 0,
                  {"negative": fit.negative_couplings, "c1_hat": fit.c1_hat}))
    items.append(("outside_bulk_bound", fit.outside_violations == 0,
                  {"violations": fit.outside_violations, "c2_hat": fit.c2_hat,
                   "worst_ratio": fit.worst_outside_ratio, "spread": fit.spread}))
    pe = ModelParams(n_exact, args.alpha, args.beta)
    ce = CouplingField(pe)
    res = energy_identity_residual(pe, ce)
    items.append(("energy_identity", res <= 1e-10, {"N": n_exact, "max_residual": res}))
    nf = min(n_exact, 6)
    pf = ModelParams(nf, args.alpha, args.beta)
    res = factorization_residual(pf)
    items.append(("factorization", res <= 1e-12, {"N": nf, "max_residual": res}))
    rep = griffiths_check(pe, ce, sorted(args.betas))
    items.append(("griffiths", rep.ok, {"N": n_exact, "violations": len(rep.violations)}))
    ok = all(flag for _, flag, _ in items)
    cfg = config_of(args)
    payload = {"bounds": asdict(fit), "checks": [{"name": n, "pass": f, **d} for n, f, d in items],
               "ok": ok}
    if args.format == "json":
        text = records.json_text("check", payload, cfg)
    else:
        rows = [{"name": n, "pass": f, "detail": records.fmt(str(d))} for n, f, d in items]
        text = records.csv_text("check", ["name", "pass", "detail"], rows, cfg)
    _emit(args, text)
    for n, f, d in items:
        if not f:
            print(f"FAIL {n}: {d}", file=sys.stderr)
    return 0 if ok else 1


def _stats_rows(stats: list[SampleStats]) -> list[dict]:
    return [s.to_dict() for s in stats]


def cmd_sample(args) -> int:
    p = ModelParams(args.n, args.alpha, args.beta)
    st = run(p, _plan(args))
    cfg = config_of(args)
    if args.format == "json":
        text = records.json_text("sample", {"stats": st.to_dict()}, cfg)
    else:
        text = records.csv_text("sample", SampleStats.CSV_COLUMNS, _stats_rows([st]), cfg)
    _emit(args, text)
    if st.error_underestimated:
        print("warning: binning did not plateau; error likely underestimated", file=sys.stderr)
    return 0


SCAN_COLUMNS = ("alpha", "beta", "gamma", "gamma_err", "intercept", "chi2_per_dof", "regime",
                "n_points", "dropped")


def cmd_scan(args) -> int:
    alphas = args.alphas or [args.alpha]
    if any(n < 1 for n in args.ns) or any(b < 0 for b in args.betas):
        raise UsageError("invalid grid")
    res = scan(alphas, args.betas, args.ns, _plan(args), jobs=args.jobs)
    cfg = config_of(args)
    if args.format == "json":
        text = records.json_text("scan", res.to_dict(), cfg)
    else:
        rows = []
        for r in res.records:
            row = {"alpha": r.alpha, "beta": r.beta, "regime": r.regime}
            if r.fit is not None:
                row.update(gamma=r.fit.gamma, gamma_err=r.fit.gamma_err, intercept=r.fit.intercept,
                           chi2_per_dof=r.fit.chi2_per_dof, n_points=r.fit.n_points,
                           dropped=" ".join(str(n) for n in r.fit.dropped))
            rows.append(row)
        text = records.csv_text("scan", SCAN_COLUMNS, rows, cfg)
    _emit(args, text)
    for a, (lo, hi) in res.brackets.items():
        print(f"alpha={a}: largest diffusive beta={lo}, smallest ballistic beta={hi}", file=sys.stderr)
    return 0


def read_points(path: str) -> list[ScalingPoint]:
    with open(path) as fh:
        _, rows = records.read_csv(fh.read())
    pts = []
    for r in rows:
        mean = r.get("mean_M_sq", r.get("mean"))
        err = r.get("err_M_sq", r.get("err", 0.0)) or 0.0
        if r.get("N") is None or mean is None:
            raise UsageError(f"{path}: rows need N and mean_M_sq (or mean) columns")
        pts.append(ScalingPoint(int(r["N"]), float(mean), float(err)))
    return pts


def cmd_fit(args) -> int:
    pts = read_points(args.input)
    fit = fit_gamma_windowed(pts)
    label = classify(fit)
    cfg = config_of(args)
    row = {**asdict(fit), "dropped": " ".join(str(n) for n in fit.dropped), "regime": label}
    if args.format == "json":
        text = records.json_text("fit", {"fit": asdict(fit), "regime": label}, cfg)
    else:
        text = records.csv_text("fit", ["gamma", "gamma_err", "intercept", "chi2_per_dof",
                                        "n_points", "dropped", "regime"], [row], cfg)
    _emit(args, text)
    return 0


COMMANDS = {"enumerate": cmd_enumerate, "check": cmd_check, "sample": cmd_sample,
            "scan": cmd_scan, "fit": cmd_fit}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.simplefilter("once")
        warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
        try:
            return COMMANDS[args.command](args)
        except (UsageError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2


if __name__ == "__main__":
    sys.exit(main())
