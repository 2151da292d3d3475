"""``mosaic-evo`` command line.

Exit codes: 0 success, 1 no fit, 2 usage, 3 numerical failure,
4 invariant violation.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import IntegrationError, InvalidStateError, InvariantViolation, MosaicEvoError, TableError
from .stats import Q_CORNERS, q_boundary_polyline, q_membership

EXIT_OK, EXIT_NOFIT, EXIT_USAGE, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4

# flags that name output files; kept out of the provenance line so that
# the same run written to two places produces identical bytes
_PATH_FLAGS = {"out", "out_series", "out_events", "svg_dir", "trajectory_out"}


class UsageError(Exception):
    pass


def _g(v) -> str:
    return format(float(v), ".17g")


def _point(text: str):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {text!r}") from None
    if len(parts) != 2 or not all(np.isfinite(parts)):
        raise argparse.ArgumentTypeError(f"expected two finite numbers x,y got {text!r}")
    return tuple(parts)


def _seed_range(text: str):
    try:
        if ".." in text:
            a, b = (int(v) for v in text.split(".."))
        else:
            a = b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b got {text!r}") from None
    if b < a or a < 0:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return a, b


def provenance(args) -> str:
    skip = _PATH_FLAGS | {"func", "cmd"}
    flags = " ".join(f"--{k.replace('_', '-')}={_flag_val(v)}" for k, v in sorted(vars(args).items())
                     if k not in skip and v is not None and v is not False)
    return f"mosaic-evo {__version__} {args.cmd} {flags}".rstrip()


def _flag_val(v):
    if isinstance(v, tuple):
        return ",".join(_g(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return _g(v)
    return str(v)


def _table(args):
    from .table import builtin_linear, builtin_nonlinear, load_table

    if args.model == "linear":
        if args.q is None:
            raise UsageError("--model linear needs --q")
        return builtin_linear(args.q)
    if args.model == "nonlinear":
        if args.mu is None:
            raise UsageError("--model nonlinear needs --mu")
        return builtin_nonlinear(args.lambda0, args.mu)
    if args.table is None:
        raise UsageError("--model table needs --table FILE")
    return load_table(args.table)


def _model_flags(p, table_ok=True):
    p.add_argument("--model", required=True, choices=("linear", "nonlinear", "table") if table_ok else ("linear", "nonlinear"))
    p.add_argument("--q", type=float, help="healing probability of the linear model")
    p.add_argument("--mu", type=float, help="nonlinear model parameter")
    p.add_argument("--lambda0", type=float, default=1.0, help="cracking intensity (nonlinear model)")
    if table_ok:
        p.add_argument("--table", help="fundamental table JSON file (with --model table)")


# -- subcommands -----------------------------------------------------------------


def cmd_ode(args, out):
    from .ode.integrator import integrate, write_trajectory_csv

    table = _table(args)
    if args.t_end < 0:
        raise UsageError("--t-end must be nonnegative")
    st = None
    if args.samples:
        st = np.linspace(0.0, args.t_end, args.samples)
    traj = integrate(table, args.x0, args.t_end, rtol=args.rtol, atol=args.atol, sample_times=st,
                     stop_on_exit=args.stop_on_exit)
    if args.out:
        write_trajectory_csv(traj, args.out, comment=provenance(args))
    fin = traj.step_states[-1]
    print(f"terminal: {traj.reason}")
    print(f"final: t={_g(traj.t_final)} state=" + " ".join(_g(v) for v in fin))
    print(f"steps: accepted={traj.n_steps} rejected={traj.n_rejected}")
    if traj.exited_q:
        print(f"exited-Q: t={_g(traj.exit_time)} at " + " ".join(_g(v) for v in traj.exit_point))
    return EXIT_OK


def cmd_fixed_point(args, out):
    from .ode.analysis import linear_fixed_point, nonlinear_fixed_point

    if args.model == "linear":
        if args.q is None:
            raise UsageError("--model linear needs --q")
        p = linear_fixed_point(args.q)
    else:
        if args.mu is None:
            raise UsageError("--model nonlinear needs --mu")
        p = nonlinear_fixed_point(args.mu)
    qm = q_membership(p)
    print(f"{_g(p.x)} {_g(p.y)}")
    status = qm.status if qm.status != "boundary" else "boundary(" + ",".join(qm.lines) + ")"
    print(f"Q: {status}")
    return EXIT_OK


def cmd_stability(args, out):
    from .ode.analysis import stability

    if not (args.mu > 0 and args.lambda1 > 0):
        raise UsageError("--mu and --lambda1 must be positive")
    rep = stability(args.mu, args.lambda1)
    print(f"fixed point: {_g(rep.fixed_point.x)} {_g(rep.fixed_point.y)}")
    J = rep.jacobian
    print(f"jacobian: [[{_g(J[0, 0])}, {_g(J[0, 1])}], [{_g(J[1, 0])}, {_g(J[1, 1])}]]")
    print("eigenvalues: " + " ".join(_g(a) for a in rep.eigenvalues))
    for k, v in enumerate(rep.eigenvectors, 1):
        print(f"v{k}: {_g(v[0])} {_g(v[1])}")
    return EXIT_OK


def _with_seed(path, seed, many):
    if path is None or not many:
        return path
    if "{seed}" in path:
        return path.replace("{seed}", str(seed))
    root, ext = os.path.splitext(path)
    return f"{root}.seed{seed}{ext}"


def _simulate_one(args, seed, many):
    from .sim.run import SimConfig, run

    table = _table(args)
    st = tuple(np.linspace(0.0, args.t_end, args.samples)) if args.samples and args.t_end is not None else None
    every = args.sample_every if args.sample_every is not None else (0 if st else 1)
    cfg = SimConfig(
        model=table,
        seed_pattern=args.seed_pattern,
        t_end=args.t_end,
        max_events=args.max_events,
        rng_seed=seed,
        geometry_mode=args.mode,
        sample_times=st,
        sample_every=every,
        keep_events=args.out_events is not None,
        debug=True if args.debug else None,
    )
    svg_dir = None
    if args.svg_every:
        svg_dir = _with_seed(args.svg_dir or "frames", seed, many)
    series, events = run(cfg, svg_every=args.svg_every, svg_dir=svg_dir)
    head = f"{cfg.header()} | {provenance(args)}"
    if args.out_series:
        series.to_csv(_with_seed(args.out_series, seed, many), comment=head)
    if args.out_events:
        events.to_csv(_with_seed(args.out_events, seed, many), comment=head)
    c = series.counts[-1] if len(series) else None
    line = f"seed={seed} terminal={series.terminal} events={series.n_events}"
    if c is not None:
        line += f" final=({c[0]},{c[1]},{c[2]}) V_I={series.V_I[-1]}"
    if len(events):
        line += f" stalled={events.n_stalled} fallback_heals={events.n_fallback}"
    return line


def _simulate_worker(payload):
    args, seed, many = payload
    try:
        return 0, _simulate_one(args, seed, many)
    except InvariantViolation as exc:
        return EXIT_INVARIANT, f"seed={seed} invariant violation: {exc}"


def cmd_simulate(args, out):
    if args.t_end is None and args.max_events is None:
        raise UsageError("simulate needs --t-end or --max-events")
    if args.seeds is not None:
        a, b = args.seeds
        seeds = list(range(a, b + 1))
    else:
        seeds = [args.rng_seed]
    many = len(seeds) > 1
    if many:
        workers = min(len(seeds), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_simulate_worker, [(args, s, True) for s in seeds]))
    else:
        results = [_simulate_worker((args, seeds[0], False))]
    code = EXIT_OK
    for c, line in results:
        print(line, file=sys.stderr if c else sys.stdout)
        code = max(code, c)
    return code


def _print_fit(r):
    name = r.param_name
    print(f"{r.family} {_fmt_pt(r.x0)} -> {_fmt_pt(r.target)}: {name}={_g(r.param)} miss={_g(r.miss)} "
          f"t_hit={_g(r.t_hit)} success={'yes' if r.success else 'no'}")


def _fmt_pt(p):
    return f"({_g(p[0])},{_g(p[1])})"


def cmd_fit(args, out):
    import json

    from .fit import direction_probe, fit
    from .ode.integrator import write_trajectory_csv

    kw = {"tol_hit": args.tol_hit}
    if args.both_directions:
        rep = direction_probe(args.model, args.from_, args.to, **kw)
        results = [rep.forward, rep.backward]
        for flag, pt in ((rep.a_outside_q, args.from_), (rep.b_outside_q, args.to)):
            if flag:
                print(f"note: {_fmt_pt(pt)} lies outside Q")
    else:
        results = [fit(args.model, args.from_, args.to, **kw)]
    for r in results:
        _print_fit(r)
    fwd = results[0]
    if args.trajectory_out and fwd.trajectory is not None:
        write_trajectory_csv(fwd.trajectory, args.trajectory_out, comment=provenance(args))
    if args.out:
        doc = [r.to_dict(args.trajectory_out if i == 0 else None) for i, r in enumerate(results)]
        with open(args.out, "w", newline="\n") as fh:
            fh.write(json.dumps({"provenance": provenance(args), "fits": doc}, indent=2) + "\n")
    return EXIT_OK if fwd.success else EXIT_NOFIT


def cmd_domain(args, out):
    pts = q_boundary_polyline(args.points_per_edge)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(f"# {provenance(args)}\n")
            fh.write("x,y\n")
            for x, y in pts:
                fh.write(f"{_g(x)},{_g(y)}\n")
    print("corners: " + " ".join(_fmt_pt(c) for c in Q_CORNERS))
    print(f"points: {len(pts)} (closed)")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mosaic-evo", description="Crack-mosaic evolution toolkit.")
    p.add_argument("--version", action="version", version=f"mosaic-evo {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("ode", help="integrate the mean-field ODE")
    _model_flags(s)
    s.add_argument("--x0", type=_point, required=True, help="start point x,y")
    s.add_argument("--t-end", type=float, required=True)
    s.add_argument("--samples", type=int, help="uniform sample count on [0, t_end] (default: step nodes)")
    s.add_argument("--rtol", type=float, default=1e-9)
    s.add_argument("--atol", type=float, default=1e-12)
    s.add_argument("--stop-on-exit", action="store_true", help="stop one step after leaving Q")
    s.add_argument("--out", help="trajectory CSV")
    s.set_defaults(func=cmd_ode)

    s = sub.add_parser("fixed-point", help="closed-form fixed point")
    s.add_argument("--model", required=True, choices=("linear", "nonlinear"))
    s.add_argument("--q", type=float)
    s.add_argument("--mu", type=float)
    s.set_defaults(func=cmd_fixed_point)

    s = sub.add_parser("stability", help="Jacobian and eigen-decomposition of the nonlinear model")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--lambda1", type=float, default=1.0)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("simulate", help="exact stochastic simulation on a torus mosaic")
    _model_flags(s)
    s.add_argument("--seed-pattern", default="brick:10x10", help="brick:RxC, square:RxC or hex:RxC")
    s.add_argument("--mode", choices=("geometric", "combinatorial"), default="geometric")
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--seeds", type=_seed_range, help="run seeds a..b in parallel")
    s.add_argument("--t-end", type=float)
    s.add_argument("--max-events", type=int)
    s.add_argument("--samples", type=int, help="sample at this many uniform times on [0, t_end]")
    s.add_argument("--sample-every", type=int, help="sample after every K events")
    s.add_argument("--out-series", help="series CSV")
    s.add_argument("--out-events", help="event log CSV")
    s.add_argument("--svg-every", type=int, help="write an SVG frame every K events")
    s.add_argument("--svg-dir", help="directory for SVG frames")
    s.add_argument("--debug", action="store_true", help="check invariants after every event")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="shooting fit between two (x, y) points")
    s.add_argument("--model", required=True, choices=("linear", "nonlinear"))
    s.add_argument("--from", dest="from_", type=_point, required=True)
    s.add_argument("--to", type=_point, required=True)
    s.add_argument("--both-directions", action="store_true")
    s.add_argument("--tol-hit", type=float, default=2e-3)
    s.add_argument("--out", help="FitResult JSON")
    s.add_argument("--trajectory-out", help="CSV of the best trajectory")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("domain", help="boundary polyline of Q")
    s.add_argument("--points-per-edge", type=int, default=1)
    s.add_argument("--out", help="CSV path")
    s.set_defaults(func=cmd_domain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, sys.stdout)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (TableError, ValueError) as exc:
        if isinstance(exc, MosaicEvoError) and not isinstance(exc, (TableError, InvalidStateError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"mosaic-evo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"mosaic-evo: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
