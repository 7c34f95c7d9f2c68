"""Command-line entry point: ``v2gcosim {bounds,profile,simulate,sweep,oracle-check}``.

Exit status: 0 on success, 1 on a usage or validation error, 2 on a numerical
fault (solver infeasibility, non-finite state, oracle mismatch).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bounds import synthesize_bounds
from .engine import MODES, SWEEP_PARAMETERS, ScenarioValidationError, run, summarize, sweep
from .frequency import NumericalFault
from .grid import ConfigurationError, load_injections, station_injections
from .output import (
    BOUNDS_COLUMNS,
    write_profile,
    write_rows,
    write_simulation,
    write_summary,
)
from .scenario import ScenarioError, load_scenario
from .voltage import (
    VoltageSolverError,
    collocation_residual,
    lumped_oracle,
    random_injections,
    solve_bvp,
)

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 1, 2

log = logging.getLogger("v2gcosim")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _bound_times(sc):
    n = int(round(sc.horizon / sc.bound_update_period))
    return [i * sc.bound_update_period for i in range(n)] or [0.0]


def cmd_bounds(args) -> int:
    sc = load_scenario(args.scenario)
    vb = sc.base.v_base
    times = [args.time] if args.time is not None else _bound_times(sc)
    rows = []
    for t in times:
        specs = sc.stations_at(t)
        b = synthesize_bounds(sc.feeder, specs, sc.limits, t, sc.bound_update_period)
        for i, st in enumerate(specs):
            caps = b.station_caps(i)
            rows.append((t, b.valid_until, i, st.ev_count, st.p_max, b.alpha_cha, b.alpha_discha,
                         -caps.charge, caps.discharge, b.dv_full * vb))
    if args.out:
        write_rows(args.out, BOUNDS_COLUMNS, rows)
    print(f"{'t_s':>8} {'station':>7} {'evs':>5} {'p_max_kw':>9} {'a_cha':>7} {'a_dis':>7} "
          f"{'cha_cap_kw':>10} {'dis_cap_kw':>10} {'dv_full_v':>9}")
    for t, _, i, n, p, ac, ad, cc, dc, dv in rows:
        print(f"{t:8.1f} {i:7d} {n:5d} {p / 1e3:9.1f} {ac:7.4f} {ad:7.4f} "
              f"{cc / 1e3:10.2f} {dc / 1e3:10.2f} {dv:9.2f}")
    return EXIT_OK


def cmd_profile(args) -> int:
    sc = load_scenario(args.scenario)
    specs = sc.stations_at(args.time)
    if args.powers is not None:
        powers = args.powers
        if len(powers) != len(specs):
            raise ScenarioValidationError(
                f"--powers needs {len(specs)} values (one per station), got {len(powers)}"
            )
    else:
        b = synthesize_bounds(sc.feeder, specs, sc.limits, args.time, sc.bound_update_period)
        caps = b.caps_watts()
        if args.assignment == "charge":
            powers = [-c.charge for c in caps]
        elif args.assignment == "discharge":
            powers = [c.discharge for c in caps]
        else:
            powers = [0.0] * len(specs)
    loads = load_injections(sc.loads, sc.base)
    reference = solve_bvp(sc.feeder, loads, sc.solver)
    prof = solve_bvp(sc.feeder, loads + station_injections(specs, powers, sc.base), sc.solver)
    if args.out:
        write_profile(prof, sc.base.v_base, args.out, reference)
        print(f"wrote {args.out}")
    else:
        write_profile(prof, sc.base.v_base, "/dev/stdout", reference)
    dev = (reference.v_end - prof.v_end) * sc.base.v_base
    print(f"v(L) = {prof.v_end:.6f} pu, deviation from loads-only = {dev:+.3f} V", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if changes:
        sc = replace(sc, **changes)
        sc.validate()
    trace = run(sc)
    files = write_simulation(trace, args.out, plot_data=args.plot_data)
    summary = summarize(trace)
    for f in files:
        print(f"wrote {f}")
    print(f"mode={sc.mode} seed={sc.seed} rms_df={summary['rms_df_hz']:.6f} Hz "
          f"max_drop={summary['max_drop_volts']:.2f} V max_rise={summary['max_rise_volts']:.2f} V")
    if trace.fault:
        print(f"fault: {trace.fault}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    param = "loading_fraction" if args.param == "loading" else args.param
    results = sweep(sc, param, args.values, workers=args.workers)
    out = Path(args.out)
    path = write_summary(param, results, out / "summary.csv" if out.suffix != ".csv" else out)
    print(f"wrote {path}")
    for value, m in results:
        if m.get("fault"):
            print(f"{param}={value:g}: fault: {m['fault']}")
        else:
            print(f"{param}={value:g}: rms_df={m['rms_df_hz']:.6f} Hz "
                  f"max_violation={m['max_violation_volts']:.2f} V "
                  f"control_error={m['control_error_volts']:.2f} V")
    return EXIT_FAULT if any(m.get("fault") for _, m in results) else EXIT_OK


def cmd_oracle_check(args) -> int:
    sc = load_scenario(args.scenario)
    rng = np.random.default_rng(args.seed)
    worst_dv = worst_res = 0.0
    for _ in range(args.trials):
        inj = random_injections(sc.feeder, args.injections, rng, args.total_max)
        prof = solve_bvp(sc.feeder, inj, sc.solver)
        dv = abs(prof.v_end - lumped_oracle(sc.feeder, inj))
        worst_dv = max(worst_dv, dv)
        worst_res = max(worst_res, collocation_residual(prof))
    ok = worst_dv < args.tol and worst_res < args.tol
    print(f"trials={args.trials} injections={args.injections} "
          f"max|dv|={worst_dv:.3e} pu max_residual={worst_res:.3e} pu "
          f"tol={args.tol:.1e} {'OK' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_FAULT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="v2gcosim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log info messages")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="print the bound set for each update period")
    b.add_argument("scenario")
    b.add_argument("--time", type=float, help="evaluate at this time only [s]")
    b.add_argument("--out", help="also write the table as CSV")
    b.set_defaults(func=cmd_bounds)

    pr = sub.add_parser("profile", help="static voltage profile for a station-power assignment")
    pr.add_argument("scenario")
    pr.add_argument("--time", type=float, default=0.0, help="EV counts at this time [s]")
    pr.add_argument("--powers", type=_floats,
                    help="station powers in W, discharge positive, comma-separated; "
                         "use --powers=-1e5,... when the first value is negative")
    pr.add_argument("--assignment", choices=("charge", "discharge", "none"), default="charge",
                    help="use the synthesised caps when --powers is not given")
    pr.add_argument("--out", help="CSV path (default: stdout)")
    pr.set_defaults(func=cmd_profile)

    s = sub.add_parser("simulate", help="closed-loop run; writes trace/voltage/bounds CSVs")
    s.add_argument("scenario")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--seed", type=int)
    s.add_argument("--horizon", type=float, help="override the horizon [s]")
    s.add_argument("--out", default="out", help="output directory")
    s.add_argument("--plot-data", action="store_true", help="also write downsampled plot_data.csv")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="one run per parameter value; writes summary.csv")
    w.add_argument("scenario")
    w.add_argument("--param", required=True, choices=(*SWEEP_PARAMETERS, "loading"),
                   help="dv_cha_limit values are in volts")
    w.add_argument("--values", required=True, type=_floats)
    w.add_argument("--out", default="out")
    w.add_argument("--workers", type=int, default=None)
    w.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle-check", help="compare the BVP solver with a lumped ladder power flow")
    o.add_argument("scenario")
    o.add_argument("--injections", type=int, default=8)
    o.add_argument("--trials", type=int, default=20)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--total-max", type=float, default=0.5, help="max total |P| [pu]")
    o.add_argument("--tol", type=float, default=1e-6)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ScenarioValidationError, ConfigurationError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (VoltageSolverError, NumericalFault) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
