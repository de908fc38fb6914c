"""Seeded Monte Carlo evaluation of scheduling policies.

Random streams: replication ``r`` of master seed ``m`` draws from
``numpy.random.PCG64(SeedSequence(m, spawn_key=(r,)))``. For every slot it
takes one uniform for the demand subset, then one for the channel vector
(the whole horizon is drawn up front, demand uniforms first). A uniform
``u`` selects the first table entry whose cumulative probability exceeds
``u``, with the table orders documented in :mod:`proactive.stats`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .policy import PolicyTable, ServiceLedger, demand_vector, step_proactive
from .stats import Tables, build_tables


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 10_000
    reps: int = 40
    seed: int = 0
    burn_in: int | None = None  # None: the policy window T
    record_per_period: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn-in must lie in [0, horizon)")

    def burn_in_for(self, policy: PolicyTable) -> int:
        b = self.burn_in if self.burn_in is not None else policy.window
        if b >= self.horizon:
            raise ValueError(f"burn-in {b} leaves no slots in a horizon of {self.horizon}")
        return b


@dataclass
class SimResult:
    policy: str
    window: int
    horizon: int
    reps: int
    burn_in: int
    mean_cost: float
    stderr_cost: float
    mean_load: np.ndarray  # (N,)
    rep_costs: np.ndarray  # (R,)
    period_cost: np.ndarray | None = None  # (Q,)
    period_cost_stderr: np.ndarray | None = None
    period_load: np.ndarray | None = None  # (Q, N)
    violations: int = 0
    clipped: int = 0
    extra: dict = field(default_factory=dict)


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def _pick(cum: np.ndarray, u: np.ndarray, last: int) -> np.ndarray:
    idx = np.sum(cum <= u[..., None], axis=-1)
    return np.minimum(idx, last)


def _draw(tables: Tables, u_demand, u_channel, slots):
    Pd = tables.demand.probs
    Pc = tables.channel.probs
    b = _pick(np.cumsum(Pd), u_demand, int(np.flatnonzero(Pd > 0)[-1]))
    cum_c = np.cumsum(Pc, axis=1)
    last_c = np.array([np.flatnonzero(row > 0)[-1] for row in Pc])
    s = np.asarray(slots) % tables.period
    c = _pick(cum_c[s], u_channel, last_c[s])
    return b, c


def sample_slot(scenario, s: int, rng: np.random.Generator):
    """One draw of (request vector, gain vector) at slot index ``s``."""
    tables = scenario if isinstance(scenario, Tables) else build_tables(scenario)
    u_d, u_c = rng.random(), rng.random()
    b, c = _draw(tables, np.array(u_d), np.array(u_c), np.array(s))
    return demand_vector(int(b), tables.n_users), tables.channel.gains[int(c)].copy()


def sample_streams(tables: Tables, horizon: int, seed: int, reps: int):
    """Demand bitmasks and flat channel indices, each of shape ``(reps, horizon)``."""
    B = np.empty((reps, horizon), dtype=np.int64)
    C = np.empty((reps, horizon), dtype=np.int64)
    t = np.arange(horizon)
    for r in range(reps):
        rng = replication_rng(seed, r)
        u_d = rng.random(horizon)
        u_c = rng.random(horizon)
        B[r], C[r] = _draw(tables, u_d, u_c, t)
    return B, C


def _check_policy(tables: Tables, policy: PolicyTable):
    if policy.service_size != tables.scenario.service_size:
        raise ValueError("policy and scenario disagree on the service size")
    if policy.mu is None:
        if policy.n_users not in (0, tables.n_users):
            raise ValueError("policy and scenario disagree on the user count")
        return
    want = (tables.n_users, tables.n_subsets, tables.n_channels)
    if policy.mu.shape[:3] != want:
        raise ValueError(f"policy table {policy.mu.shape} does not match scenario {want}")
    if policy.kind == "proactive_tv" and policy.period != tables.period:
        raise ValueError(
            f"policy period {policy.period} differs from channel period {tables.period}"
        )


def simulate_loads(tables: Tables, policy: PolicyTable, B: np.ndarray, C: np.ndarray):
    """Slot-by-slot loads ``(R, t, N)`` of a policy on given streams, plus the ledger."""
    S = tables.scenario.service_size
    R, horizon = B.shape
    N = tables.n_users
    if policy.kind == "reactive":
        return S * demand_vector(B, N), None
    ledger = ServiceLedger(N, policy.window, S, batch=(R,))
    loads = np.empty((R, horizon, N))
    Q = tables.period
    for t in range(horizon):
        loads[:, t, :], _ = step_proactive(policy, B[:, t], C[:, t], t % Q, ledger)
    return loads, ledger


def run(scenario, policy: PolicyTable, config: SimConfig) -> SimResult:
    tables = scenario if isinstance(scenario, Tables) else build_tables(scenario)
    _check_policy(tables, policy)
    burn = config.burn_in_for(policy)
    B, C = sample_streams(tables, config.horizon, config.seed, config.reps)
    loads, ledger = simulate_loads(tables, policy, B, C)
    costs = tables.scenario.cost(loads, tables.channel.gains[C])  # (R, t)

    kept = costs[:, burn:]
    rep_costs = np.array([math.fsum(row) / row.size for row in kept])
    R = config.reps
    mean_load = loads[:, burn:, :].mean(axis=(0, 1))
    result = SimResult(
        policy=policy.kind,
        window=policy.window,
        horizon=config.horizon,
        reps=R,
        burn_in=burn,
        mean_cost=math.fsum(rep_costs) / R,
        stderr_cost=_stderr(rep_costs),
        mean_load=mean_load,
        rep_costs=rep_costs,
        violations=0 if ledger is None else ledger.violations,
        clipped=0 if ledger is None else ledger.clipped,
    )
    if config.record_per_period:
        pc, pse, pl = per_period_profile(costs, loads, tables.period, burn)
        result.period_cost, result.period_cost_stderr, result.period_load = pc, pse, pl
    return result


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def per_period_profile(costs: np.ndarray, loads: np.ndarray, Q: int, burn_in: int = 0):
    """Average cost (with standard error over replications) and load per slot index."""
    if costs is None or loads is None:
        raise ValueError("per-period profile needs recorded slot costs and loads")
    horizon = costs.shape[1]
    t = np.arange(burn_in, horizon)
    pc = np.empty(Q)
    pse = np.empty(Q)
    pl = np.empty((Q, loads.shape[-1]))
    for s in range(Q):
        sel = t[t % Q == s]
        if sel.size == 0:
            raise ValueError(f"no recorded slots with index {s} after burn-in")
        per_rep = np.array([math.fsum(row) / row.size for row in costs[:, sel]])
        pc[s] = math.fsum(per_rep) / len(per_rep)
        pse[s] = _stderr(per_rep)
        pl[s] = loads[:, sel, :].mean(axis=(0, 1))
    return pc, pse, pl


# -- CSV output ----------------------------------------------------------------


def summary_rows(results: list[tuple[str, SimResult]]) -> str:
    n_users = max(len(r.mean_load) for _, r in results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["run_id", "policy", "T", "t_max", "reps", "mean_cost", "stderr_cost"]
        + [f"mean_load_user_{n}" for n in range(n_users)]
    )
    for run_id, r in results:
        w.writerow(
            [run_id, r.policy, r.window, r.horizon, r.reps, repr(r.mean_cost), repr(r.stderr_cost)]
            + [repr(float(x)) for x in r.mean_load]
        )
    return buf.getvalue()


def period_rows(results: list[tuple[str, SimResult]]) -> str:
    n_users = max(len(r.mean_load) for _, r in results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["run_id", "policy", "T", "s", "avg_cost", "stderr_cost"]
        + [f"avg_load_user_{n}" for n in range(n_users)]
    )
    for run_id, r in results:
        if r.period_cost is None:
            continue
        for s in range(len(r.period_cost)):
            w.writerow(
                [run_id, r.policy, r.window, s, repr(float(r.period_cost[s])),
                 repr(float(r.period_cost_stderr[s]))]
                + [repr(float(x)) for x in r.period_load[s]]
            )
    return buf.getvalue()
