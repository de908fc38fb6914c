"""Lower bounds on the proactive scheduling cost.

Two convex programs over box-constrained tables of average proactive service:

* time-invariant channel: ``mu[n, b, c]`` for user ``n``, demand subset
  bitmask ``b`` and flat channel index ``c``;
* cyclo-stationary channel: ``mu[n, b, c, s, s2]`` where ``s`` is the current
  slot index and ``s2`` the slot index the service is meant for.

Both objectives are evaluated from explicit enumeration of the demand and
channel tables and accept extra leading batch axes on ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Scenario
from .stats import Tables, build_tables, slot_distribution, window_weights

KINDS = ("ti", "tv", "tv_general")

# objective values can only be compared to about this relative precision
_ROUNDING = 8 * np.finfo(float).eps


def _tables(x) -> Tables:
    return x if isinstance(x, Tables) else build_tables(x)


def _clamp_loads(L: np.ndarray) -> np.ndarray:
    # loads are >= 0 in exact arithmetic since mubar <= S
    if np.any(L < -1e-12):
        raise ValueError(f"negative load {L.min():.3e}; mu table outside its box?")
    return np.maximum(L, 0.0)


def _check_shape(mu: np.ndarray, expected: tuple[int, ...]) -> None:
    if mu.shape[mu.ndim - len(expected):] != expected:
        raise ValueError(f"mu table has shape {mu.shape}, expected trailing {expected}")


# -- time-invariant bound ------------------------------------------------------


def ti_shape(tables: Tables) -> tuple[int, int, int]:
    return (tables.n_users, tables.n_subsets, tables.n_channels)


def _ti_weights(tables: Tables) -> np.ndarray:
    if tables.period != 1:
        raise ValueError(
            f"time-invariant bound needs period 1, scenario has period {tables.period}"
        )
    return np.outer(tables.demand.probs, tables.channel.probs[0])


def _ti_loads(mu: np.ndarray, tables: Tables, w: np.ndarray) -> np.ndarray:
    S = tables.scenario.service_size
    member = tables.demand.membership
    mubar = np.einsum("...nbc,bc->...n", mu, w)
    L = member[:, None, :] * (S - mubar)[..., None, None, :] + np.moveaxis(mu, -3, -1)
    return _clamp_loads(L)


def objective_ti(mu, scenario) -> float | np.ndarray:
    """Time-invariant bound objective at ``mu`` (shape ``(..., N, 2**N, C)``)."""
    tables = _tables(scenario)
    mu = np.asarray(mu, dtype=float)
    _check_shape(mu, ti_shape(tables))
    w = _ti_weights(tables)
    L = _ti_loads(mu, tables, w)
    cost = tables.scenario.cost(L, tables.channel.gains[None, :, :])
    out = np.einsum("...bc,bc->...", cost, w)
    return float(out) if out.ndim == 0 else out


def gradient_ti(mu, scenario) -> np.ndarray:
    tables = _tables(scenario)
    mu = np.asarray(mu, dtype=float)
    _check_shape(mu, ti_shape(tables))
    w = _ti_weights(tables)
    L = _ti_loads(mu, tables, w)
    G = w[:, :, None] * tables.scenario.cost.dload(L, tables.channel.gains[None, :, :])
    H = np.einsum("bn,bcn->n", tables.demand.membership, G)
    return np.moveaxis(G, -1, 0) - w[None, :, :] * H[:, None, None]


# -- cyclo-stationary bound ----------------------------------------------------


def tv_shape(tables: Tables) -> tuple[int, ...]:
    Q = tables.period
    return (tables.n_users, tables.n_subsets, tables.n_channels, Q, Q)


def _tv_parts(tables: Tables, T: int | None):
    """Conditional weights ``ws[s, b, c]`` and the window matrix ``M[s, s2]``."""
    Q = tables.period
    ws = tables.demand.probs[None, :, None] * tables.channel.probs[:, None, :]
    if T is None:
        M = np.tile(slot_distribution(Q), (Q, 1))
    else:
        M = window_weights(Q, T)
    return ws, M


def _tv_loads(mu, tables, ws, M):
    S = tables.scenario.service_size
    member = tables.demand.membership
    A = np.einsum("...nbcst,st->...nbcs", mu, M)
    mubar = np.einsum("ts,tbc,...nbcts->...ns", M, ws, mu)
    L = member[None, :, None, :] * (S - np.swapaxes(mubar, -1, -2))[..., :, None, None, :]
    L = L + np.moveaxis(A, (-4, -1), (-1, -4))
    return _clamp_loads(L)


def _tv_value(mu, tables, T):
    mu = np.asarray(mu, dtype=float)
    _check_shape(mu, tv_shape(tables))
    ws, M = _tv_parts(tables, T)
    L = _tv_loads(mu, tables, ws, M)
    cost = tables.scenario.cost(L, tables.channel.gains[None, None, :, :])
    Ps = slot_distribution(tables.period)
    out = np.einsum("...sbc,s,sbc->...", cost, Ps, ws)
    return float(out) if out.ndim == 0 else out


def _tv_grad(mu, tables, T):
    mu = np.asarray(mu, dtype=float)
    _check_shape(mu, tv_shape(tables))
    ws, M = _tv_parts(tables, T)
    L = _tv_loads(mu, tables, ws, M)
    Ps = slot_distribution(tables.period)
    G = (Ps[:, None, None] * ws)[..., None] * tables.scenario.cost.dload(
        L, tables.channel.gains[None, None, :, :]
    )
    H = np.einsum("bn,sbcn->ns", tables.demand.membership, G)
    # d/dmu[n,b,c,s,s2] = M[s,s2] * (G[s,b,c,n] - ws[s,b,c] * H[n,s2])
    first = np.transpose(G, (3, 1, 2, 0))[..., None]
    second = np.transpose(ws, (1, 2, 0))[None, :, :, :, None] * H[:, None, None, None, :]
    return M[None, None, None, :, :] * (first - second)


def objective_tv(mu, scenario) -> float | np.ndarray:
    """Cyclo-stationary bound objective (window a multiple of the period)."""
    return _tv_value(mu, _tables(scenario), None)


def gradient_tv(mu, scenario) -> np.ndarray:
    return _tv_grad(mu, _tables(scenario), None)


def objective_tv_general(mu, scenario, T: int) -> float | np.ndarray:
    """Cyclo-stationary bound objective for an arbitrary window ``T``.

    Service decided at slot index ``s`` for target ``s2`` is weighted by the
    fraction of offsets ``1..T`` that land on ``s2``.
    """
    if T < 1:
        raise ValueError("window T must be >= 1")
    return _tv_value(mu, _tables(scenario), int(T))


def gradient_tv_general(mu, scenario, T: int) -> np.ndarray:
    if T < 1:
        raise ValueError("window T must be >= 1")
    return _tv_grad(mu, _tables(scenario), int(T))


def collapse_ti_to_tv(mu_ti: np.ndarray) -> np.ndarray:
    return np.asarray(mu_ti, dtype=float)[..., None, None]


# -- problem wrapper -----------------------------------------------------------


@dataclass
class _Problem:
    kind: str
    tables: Tables
    T: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "tv_general" and (self.T is None or self.T < 1):
            raise ValueError("tv_general bound needs a window T >= 1")
        if self.kind != "tv_general":
            self.T = None

    @property
    def shape(self):
        return ti_shape(self.tables) if self.kind == "ti" else tv_shape(self.tables)

    def value(self, mu):
        if self.kind == "ti":
            return objective_ti(mu, self.tables)
        return _tv_value(mu, self.tables, self.T)

    def grad(self, mu):
        if self.kind == "ti":
            return gradient_ti(mu, self.tables)
        return _tv_grad(mu, self.tables, self.T)

    def free_mask(self) -> np.ndarray:
        """Cells that can influence the objective; the rest are pinned to 0."""
        t = self.tables
        if self.kind == "ti":
            w = _ti_weights(t)
            return np.broadcast_to(w > 0, self.shape).copy()
        ws, M = _tv_parts(t, self.T)
        cell = (ws > 0)[:, :, :, None] & (M > 0)[:, None, None, :]  # (s, b, c, s2)
        return np.broadcast_to(np.transpose(cell, (1, 2, 0, 3)), self.shape).copy()


# -- solver --------------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200_000
    tol: float = 1e-9
    initial_step: float = 1.0
    shrink: float = 0.5
    init: float | None = None  # defaults to S/2
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.initial_step > 0:
            raise ValueError("initial step must be positive")


@dataclass
class LowerBoundSolution:
    kind: str
    mu: np.ndarray
    bound: float
    iterations: int
    pg_norm: float
    converged: bool
    window: int | None = None
    scenario: Scenario | None = field(default=None, repr=False)

    @property
    def period(self) -> int:
        return 1 if self.kind == "ti" else self.mu.shape[-1]


def projected_gradient_norm(x, g, S) -> float:
    return float(np.linalg.norm(x - np.clip(x - g, 0.0, S)))


def solve(kind: str, scenario, opts: SolverOptions | None = None, T: int | None = None):
    """Minimise a bound objective over the box ``[0, S]`` by projected gradient.

    Each iteration tries a Barzilai-Borwein step and backtracks until the
    Armijo condition holds. Stops when ``||mu - P(mu - grad)|| <= tol``.
    """
    opts = opts or SolverOptions()
    tables = _tables(scenario)
    prob = _Problem(kind, tables, T)
    S = tables.scenario.service_size
    free = prob.free_mask()
    init = S / 2 if opts.init is None else float(opts.init)
    x = np.where(free, min(max(init, 0.0), S), 0.0)

    f = prob.value(x)
    g = prob.grad(x) * free
    step = opts.initial_step
    pg = projected_gradient_norm(x, g, S)
    it = 0
    while pg > opts.tol and it < opts.max_iter:
        gd = 0.0
        while True:
            xn = np.clip(x - step * g, 0.0, S)
            d = xn - x
            gd = float(np.vdot(g, d))
            fn = prob.value(xn)
            if fn - f <= opts.armijo * gd + _ROUNDING * abs(f):
                break
            step *= opts.shrink
            if step < 1e-300:
                break
        if step < 1e-300 or not np.any(d):
            break
        gn = prob.grad(xn) * free
        y = gn - g
        sy = float(np.vdot(d, y))
        step = float(np.vdot(d, d)) / sy if sy > 0 else step * 2.0
        step = min(max(step, 1e-12), 1e12)
        x, f, g = xn, fn, gn
        pg = projected_gradient_norm(x, g, S)
        it += 1

    return LowerBoundSolution(
        kind=kind,
        mu=x.reshape(prob.shape),
        bound=float(prob.value(x)),
        iterations=it,
        pg_norm=pg,
        converged=pg <= opts.tol,
        window=prob.T,
        scenario=tables.scenario,
    )


def reactive_cost(scenario) -> float:
    """Expected per-slot cost when every request is served on arrival."""
    tables = _tables(scenario)
    S = tables.scenario.service_size
    L = S * tables.demand.membership[:, None, :]
    cost = tables.scenario.cost(L, tables.channel.gains[None, :, :])  # (b, c)
    Ps = slot_distribution(tables.period)
    return float(np.einsum("s,b,sc,bc->", Ps, tables.demand.probs, tables.channel.probs, cost))


def per_period_bound_costs(solution: LowerBoundSolution, scenario=None) -> np.ndarray:
    """Expected cost at each slot index implied by a bound solution."""
    tables = _tables(scenario if scenario is not None else solution.scenario)
    mu = solution.mu
    if solution.kind == "ti":
        w = _ti_weights(tables)
        L = _ti_loads(mu, tables, w)
        cost = tables.scenario.cost(L, tables.channel.gains[None, :, :])
        return np.array([float(np.sum(cost * w))])
    ws, M = _tv_parts(tables, solution.window)
    L = _tv_loads(mu, tables, ws, M)
    cost = tables.scenario.cost(L, tables.channel.gains[None, None, :, :])
    return np.einsum("sbc,sbc->s", cost, ws)


def per_period_bound_loads(solution: LowerBoundSolution, scenario=None) -> np.ndarray:
    """Expected load of each user at each slot index, shape ``(Q, N)``."""
    tables = _tables(scenario if scenario is not None else solution.scenario)
    mu = solution.mu
    if solution.kind == "ti":
        w = _ti_weights(tables)
        L = _ti_loads(mu, tables, w)
        return np.einsum("bcn,bc->n", L, w)[None, :]
    ws, M = _tv_parts(tables, solution.window)
    L = _tv_loads(mu, tables, ws, M)
    return np.einsum("sbcn,sbc->sn", L, ws)


# -- brute-force oracle --------------------------------------------------------

MAX_ORACLE_DIM = 6


def _grid_min(evaluate, axes, chunk=1 << 20):
    """Exhaustive minimum of ``evaluate`` over the product of 1-D ``axes``."""
    sizes = [len(a) for a in axes]
    total = math.prod(sizes)
    best_val, best_idx = math.inf, 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, sizes)
        pts = np.stack([a[i] for a, i in zip(axes, idx)], axis=-1)
        vals = evaluate(pts)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_idx = float(vals[j]), int(flat[j])
    idx = np.unravel_index(best_idx, sizes)
    return best_val, np.array([a[i] for a, i in zip(axes, idx)])


def brute_force_bound(kind: str, scenario, resolution: float, T: int | None = None):
    """Grid-search oracle for a bound, for tables with at most six free cells.

    Searches ``[0, S]**dim`` at ``resolution`` and then a box of half-width
    ``resolution`` around the best point at ``resolution / 10``.
    Returns ``(value, mu)``.
    """
    tables = _tables(scenario)
    prob = _Problem(kind, tables, T)
    S = tables.scenario.service_size
    free = prob.free_mask()
    dim = int(free.sum())
    if dim > MAX_ORACLE_DIM:
        raise ValueError(f"oracle limited to {MAX_ORACLE_DIM} free variables, got {dim}")
    shape = prob.shape
    where = np.flatnonzero(free.ravel())

    def evaluate(pts):
        mu = np.zeros((len(pts), math.prod(shape)))
        mu[:, where] = pts
        return prob.value(mu.reshape((len(pts),) + shape))

    def full(point):
        mu = np.zeros(math.prod(shape))
        mu[where] = point
        return mu.reshape(shape)

    if dim == 0:
        mu = np.zeros(shape)
        return float(prob.value(mu)), mu
    n = int(round(S / resolution))
    coarse = np.linspace(0.0, S, n + 1)
    val, pt = _grid_min(evaluate, [coarse] * dim)
    offsets = np.linspace(-resolution, resolution, 21)
    axes = [np.unique(np.clip(c + offsets, 0.0, S)) for c in pt]
    fval, fpt = _grid_min(evaluate, axes)
    if fval < val:
        val, pt = fval, fpt
    return val, full(pt)

