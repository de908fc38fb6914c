"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 invalid input, 3 solver did not converge.
The default output directory is taken from ``PROACTIVE_OUT`` (else ``.``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import experiments
from .model import ScenarioError, load_scenario, validate_scenario
from .policy import compile_ti, compile_tv, reactive_policy
from .sim import SimConfig, period_rows, run, summary_rows
from .solver import LowerBoundSolution, SolverOptions, reactive_cost, solve
from .trace import TraceError, build_profile, parse_trace

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NOCONV = 0, 1, 2, 3
MODELS = {"ti": "ti", "tv": "tv", "tv-general": "tv_general"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def out_dir() -> Path:
    return Path(os.environ.get("PROACTIVE_OUT", "."))


def _scenario(path):
    sc = load_scenario(path)
    problems = validate_scenario(sc)
    if problems:
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(problems))
    return sc


def _solver_opts(args) -> SolverOptions:
    return SolverOptions(max_iter=args.max_iter, tol=args.tol)


def solution_to_dict(sol: LowerBoundSolution) -> dict:
    return {
        "kind": sol.kind,
        "window": sol.window,
        "bound": sol.bound,
        "iterations": sol.iterations,
        "pg_norm": sol.pg_norm,
        "converged": sol.converged,
        "shape": list(sol.mu.shape),
        "index_order": "user, subset bitmask, channel tuple[, s, s_target]",
        "values": sol.mu.ravel().tolist(),
    }


def solution_from_dict(doc: dict, scenario) -> LowerBoundSolution:
    return LowerBoundSolution(
        kind=doc["kind"],
        mu=np.asarray(doc["values"], dtype=float).reshape(doc["shape"]),
        bound=float(doc["bound"]),
        iterations=int(doc["iterations"]),
        pg_norm=float(doc["pg_norm"]),
        converged=bool(doc["converged"]),
        window=doc.get("window"),
        scenario=scenario,
    )


def _bound_scenario(sc, model):
    # the time-invariant bound of a cyclo-stationary scenario uses the averaged statistics
    if model == "ti" and sc.period > 1:
        return sc.with_channel(sc.channel.time_averaged())
    return sc


def cmd_bound(args) -> int:
    sc = _scenario(args.scenario)
    model = MODELS[args.model]
    if model == "tv_general" and args.T is None:
        raise UsageError("--model tv-general needs --T")
    sol = solve(model, _bound_scenario(sc, model), _solver_opts(args), T=args.T)
    out = Path(args.out) if args.out else out_dir() / f"{Path(args.scenario).stem}.{model}.solution.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(solution_to_dict(sol)))
    print(f"model={args.model} bound={sol.bound!r} reactive={reactive_cost(sc)!r}")
    print(f"iterations={sol.iterations} pg_norm={sol.pg_norm:.3e} converged={sol.converged}")
    print(f"solution written to {out}")
    return EXIT_OK if sol.converged else EXIT_NOCONV


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    cfg = SimConfig(args.horizon, args.reps, args.seed, args.burn_in,
                    record_per_period=args.per_period is not None)
    if args.policy == "reactive":
        pol = reactive_policy(sc.n_users, sc.service_size)
    else:
        if args.T is None:
            raise UsageError(f"--policy {args.policy} needs --T")
        model = "ti" if args.policy == "proactive-ti" else "tv"
        if args.solution:
            sol = solution_from_dict(json.loads(Path(args.solution).read_text()), sc)
        else:
            sol = solve(model, _bound_scenario(sc, model), _solver_opts(args))
            if not sol.converged:
                print(f"solver did not converge (pg_norm={sol.pg_norm:.3e})", file=sys.stderr)
                return EXIT_NOCONV
            sol.scenario = sc
        pol = compile_ti(sol, args.T) if model == "ti" else compile_tv(sol, args.T, sc.period)
    res = run(sc, pol, cfg)
    run_id = args.run_id or f"{Path(args.scenario).stem}-{args.policy}"
    text = summary_rows([(run_id, res)])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.per_period is not None:
        Path(args.per_period).write_text(period_rows([(run_id, res)]))
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.preset not in experiments.PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(experiments.PRESETS)}")
    cfg = SimConfig(args.horizon, args.reps, args.seed)
    out = Path(args.out) if args.out else out_dir()
    for path in experiments.run_preset(args.preset, out, cfg, _solver_opts(args)):
        print(path)
    return EXIT_OK


def cmd_ingest(args) -> int:
    if (args.slot_seconds is None) == (args.slot_meters is None):
        raise UsageError("give exactly one of --slot-seconds or --slot-meters")
    records = parse_trace(args.trace)
    by = "time" if args.slot_seconds is not None else "distance"
    length = args.slot_seconds if by == "time" else args.slot_meters
    profile = build_profile(records, length, args.period, by=by)
    text = yaml.safe_dump(profile.to_fragment(), sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    problems = validate_scenario(sc)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return EXIT_INVALID if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proactive", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(sp):
        sp.add_argument("--tol", type=float, default=SolverOptions.tol)
        sp.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)

    def sim_flags(sp):
        sp.add_argument("--horizon", type=int, default=10_000)
        sp.add_argument("--reps", type=int, default=40)
        sp.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bound", help="compute a lower bound and write its solution table")
    b.add_argument("scenario")
    b.add_argument("--model", choices=sorted(MODELS), default="ti")
    b.add_argument("--T", type=int)
    b.add_argument("--out")
    solver_flags(b)
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    s.add_argument("scenario")
    s.add_argument("--policy", choices=["reactive", "proactive-ti", "proactive-tv"], default="reactive")
    s.add_argument("--T", type=int)
    sim_flags(s)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--solution", help="solution file from the bound command")
    s.add_argument("--out")
    s.add_argument("--per-period", metavar="CSV", help="also write per-slot-index averages")
    s.add_argument("--run-id")
    solver_flags(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a preset sweep and write CSV")
    e.add_argument("preset")
    e.add_argument("--out")
    sim_flags(e)
    solver_flags(e)
    e.set_defaults(func=cmd_experiment)

    i = sub.add_parser("ingest", help="turn an RSRP trace into a channel profile")
    i.add_argument("trace")
    i.add_argument("--slot-seconds", type=float)
    i.add_argument("--slot-meters", type=float)
    i.add_argument("--period", type=int, required=True)
    i.add_argument("--out")
    i.set_defaults(func=cmd_ingest)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"proactive: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, TraceError, ValueError, OSError) as exc:
        print(f"proactive: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
