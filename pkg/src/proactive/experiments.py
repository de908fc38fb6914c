"""Preset sweeps (fig4 .. fig8) that write plot-ready CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .model import single_user, symmetric
from .policy import compile_ti, compile_tv, reactive_policy
from .sim import SimConfig, run
from .solver import (
    SolverOptions,
    per_period_bound_costs,
    per_period_bound_loads,
    reactive_cost,
    solve,
)

S = 1.0
EXPONENT = 4.0
FIG6 = dict(pi=0.42, psi_bad=0.54, gains=(0.5, 2.0), users=2)
FIG7_PROFILE = (0.8, 0.9, 0.12, 0.24, 0.89, 0.64, 0.9, 0.11, 0.2, 0.27, 0.89, 0.70, 0.59, 0.14)
FIG8_PROFILE = (0.4, 0.55, 0.7, 0.8, 0.9, 0.7, 0.55, 0.4, 0.25, 0.36, 0.53, 0.67, 0.7, 0.78)
FIG8_WINDOWS = (14, 168, 672)


def fig6_scenario():
    return symmetric(FIG6["users"], FIG6["pi"], [FIG6["psi_bad"]], FIG6["gains"], S, EXPONENT)


def fig7_scenario():
    return symmetric(FIG6["users"], FIG6["pi"], FIG7_PROFILE, FIG6["gains"], S, EXPONENT)


def fig8_scenario():
    return symmetric(FIG6["users"], FIG6["pi"], FIG8_PROFILE, FIG6["gains"], S, EXPONENT)


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    sweep: dict
    runner: Callable = field(repr=False)


def _write(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def fig4(out: Path, sim: SimConfig, opts: SolverOptions, grid=None) -> list[Path]:
    grid = np.round(np.linspace(0, 1, 11), 10) if grid is None else grid
    rows = []
    for pi in grid:
        for psi in grid:
            sc = single_user(pi, psi, (1.0, 2.0), S, EXPONENT)
            rows.append((float(pi), float(psi), reactive_cost(sc), solve("ti", sc, opts).bound))
    return [_write(out / "fig4.csv", ["pi", "psi_bad", "reactive", "proactive_bound"], rows)]


def fig5(out: Path, sim: SimConfig, opts: SolverOptions, g2_grid=None) -> list[Path]:
    g2_grid = np.linspace(1, 4, 13) if g2_grid is None else g2_grid
    paths = []
    for psi in (1.0, 0.7, 0.3):
        rows = []
        for g2 in g2_grid:
            sc = single_user(0.5, psi, (1.0, float(g2)), S, EXPONENT)
            rows.append((float(g2), reactive_cost(sc), solve("ti", sc, opts).bound))
        paths.append(_write(out / f"fig5_psi{psi:g}.csv", ["g2", "reactive", "proactive_bound"], rows))
    return paths


def _window_sweep(sc, kind, windows, sim, opts):
    bound = solve(kind, sc, opts)
    rc = reactive_cost(sc)
    rows = []
    for T in windows:
        pol = compile_ti(bound, T) if kind == "ti" else compile_tv(bound, T)
        r = run(sc, pol, sim)
        rows.append((int(T), rc, bound.bound, r.mean_cost, r.stderr_cost))
    return rows


def fig6(out: Path, sim: SimConfig, opts: SolverOptions, windows=(1, 5, 10, 20, 30, 50, 75, 100)):
    rows = _window_sweep(fig6_scenario(), "ti", windows, sim, opts)
    header = ["T", "reactive", "proactive_bound", "simulated_proactive", "stderr"]
    return [_write(out / "fig6.csv", header, rows)]


def fig7(out: Path, sim: SimConfig, opts: SolverOptions,
         windows=(14, 28, 42, 56, 70, 84, 98, 112)):
    sc = fig7_scenario()
    rows = _window_sweep(sc, "tv", windows, sim, opts)
    c_u = solve("ti", sc.with_channel(sc.channel.time_averaged()), opts).bound
    header = ["T", "reactive", "proactive_bound", "simulated_proactive", "stderr", "bound_time_averaged"]
    return [_write(out / "fig7.csv", header, [r + (c_u,) for r in rows])]


def fig8(out: Path, sim: SimConfig, opts: SolverOptions, windows=FIG8_WINDOWS):
    sc = fig8_scenario()
    cfg = SimConfig(sim.horizon, sim.reps, sim.seed, sim.burn_in, record_per_period=True)
    N = sc.n_users
    bound = solve("tv", sc, opts)
    rows = []
    runs = [("reactive", 0, run(sc, reactive_policy(N, S), cfg))]
    runs += [("proactive_tv", T, run(sc, compile_tv(bound, T), cfg)) for T in windows]
    for name, T, r in runs:
        for s in range(sc.period):
            rows.append((name, T, s, r.period_cost[s], r.period_cost_stderr[s],
                         *r.period_load[s]))
    bc = per_period_bound_costs(bound)
    bl = per_period_bound_loads(bound)
    for s in range(sc.period):
        rows.append(("bound", "", s, bc[s], 0.0, *bl[s]))
    header = ["policy", "T", "s", "avg_cost", "stderr_cost"] + [f"avg_load_user_{n}" for n in range(N)]
    return [_write(out / "fig8.csv", header, rows)]


PRESETS = {
    "fig4": ExperimentPreset("fig4", "cost surface over demand and bad-channel probability",
                             {"pi": "0..1 step 0.1", "psi_bad": "0..1 step 0.1"}, fig4),
    "fig5": ExperimentPreset("fig5", "cost versus good-channel gain",
                             {"g2": "1..4 step 0.25", "psi_bad": [1.0, 0.7, 0.3]}, fig5),
    "fig6": ExperimentPreset("fig6", "time-invariant policy versus window T",
                             {"T": [1, 5, 10, 20, 30, 50, 75, 100]}, fig6),
    "fig7": ExperimentPreset("fig7", "cyclo-stationary policy versus window T",
                             {"T": [14, 28, 42, 56, 70, 84, 98, 112]}, fig7),
    "fig8": ExperimentPreset("fig8", "per-period cost and load profiles",
                             {"T": list(FIG8_WINDOWS)}, fig8),
}


def run_preset(name: str, out, sim: SimConfig | None = None,
               opts: SolverOptions | None = None) -> list[Path]:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name].runner(Path(out), sim or SimConfig(), opts or SolverOptions())
