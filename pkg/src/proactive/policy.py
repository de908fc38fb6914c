"""Stationary proactive policies and the per-slot control law.

A compiled policy spreads the optimised average service ``mu`` evenly over
the next ``T`` slots: at slot ``t`` it credits ``mu[...] / T`` toward each of
the slots ``t+1 .. t+T``. Credits live in a :class:`ServiceLedger` and are
consumed when their slot arrives.

All step functions accept a leading batch axis (independent replications
advancing in lockstep); scalars work too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .solver import LowerBoundSolution

KINDS = ("reactive", "proactive_ti", "proactive_tv")


@dataclass(frozen=True)
class PolicyTable:
    kind: str
    window: int
    service_size: float
    mu: np.ndarray | None = None  # (N, 2**N, C) or (N, 2**N, C, Q, Q)
    n_users: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind != "reactive":
            if self.window < 1:
                raise ValueError("proactive window T must be >= 1")
            mu = np.asarray(self.mu, dtype=float)
            want = 3 if self.kind == "proactive_ti" else 5
            if mu.ndim != want:
                raise ValueError(f"{self.kind} table needs {want} axes, got shape {mu.shape}")
            if want == 5 and mu.shape[3] != mu.shape[4]:
                raise ValueError(f"slot axes differ in length: {mu.shape}")
            if np.any(mu < 0) or np.any(mu > self.service_size):
                raise ValueError("policy table entries must lie in [0, S]")
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "n_users", mu.shape[0])

    @property
    def period(self) -> int:
        return self.mu.shape[-1] if self.kind == "proactive_tv" else 1

    @property
    def n_entries(self) -> int:
        return 0 if self.mu is None else self.mu[0].size

    def controls(self, subsets, channels, s: int = 0) -> np.ndarray:
        """Proactive controls ``u[..., n, tau-1]`` for ``tau = 1..T``.

        ``subsets`` and ``channels`` are demand bitmasks and flat channel
        indices (scalars or arrays of equal shape).
        """
        if self.kind == "reactive":
            raise ValueError("reactive policy applies no proactive control")
        T = self.window
        b = np.asarray(subsets)
        c = np.asarray(channels)
        if self.kind == "proactive_ti":
            per_slot = np.moveaxis(self.mu[:, b, c], 0, -1) / T  # (..., N)
            return np.broadcast_to(per_slot[..., None], per_slot.shape + (T,))
        Q = self.period
        targets = (s + np.arange(1, T + 1)) % Q
        rows = self.mu[:, b, c, s % Q, :]  # (N, ..., Q)
        return np.moveaxis(rows[..., targets], 0, -2) / T

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "window": self.window, "service_size": self.service_size}
        if self.mu is not None:
            doc["shape"] = list(self.mu.shape)
            doc["index_order"] = "user, subset bitmask, channel tuple, s, s_target"
            doc["values"] = self.mu.ravel().tolist()
        else:
            doc["n_users"] = self.n_users
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PolicyTable":
        mu = None
        if "values" in doc:
            mu = np.asarray(doc["values"], dtype=float).reshape(doc["shape"])
        return cls(
            kind=doc["kind"],
            window=int(doc["window"]),
            service_size=float(doc["service_size"]),
            mu=mu,
            n_users=int(doc.get("n_users", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PolicyTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def reactive_policy(n_users: int, service_size: float) -> PolicyTable:
    return PolicyTable("reactive", 0, float(service_size), None, n_users)


def _solution_S(solution: LowerBoundSolution) -> float:
    if solution.scenario is None:
        raise ValueError("solution carries no scenario")
    return solution.scenario.service_size


def compile_ti(solution: LowerBoundSolution, T: int) -> PolicyTable:
    if solution.kind != "ti":
        raise ValueError(f"expected a time-invariant solution, got {solution.kind!r}")
    if solution.scenario is not None and solution.mu.shape[0] != solution.scenario.n_users:
        raise ValueError("solution table does not match its scenario")
    return PolicyTable("proactive_ti", int(T), _solution_S(solution), solution.mu.copy())


def compile_tv(solution: LowerBoundSolution, T: int, Q: int | None = None) -> PolicyTable:
    if solution.kind not in ("tv", "tv_general"):
        raise ValueError(f"expected a cyclo-stationary solution, got {solution.kind!r}")
    if Q is not None and solution.mu.shape[-1] != Q:
        raise ValueError(f"solution has period {solution.mu.shape[-1]}, expected {Q}")
    return PolicyTable("proactive_tv", int(T), _solution_S(solution), solution.mu.copy())


class ServiceLedger:
    """Credits already served toward the current slot and the next ``T`` slots.

    Ring buffer of ``T + 1`` cells per user; ``offset(0)`` is the current
    slot. Every credit is kept in ``[0, S]``.
    """

    def __init__(self, n_users: int, window: int, service_size: float, batch: tuple = ()):
        self.window = int(window)
        self.service_size = float(service_size)
        self.credits = np.zeros(tuple(batch) + (n_users, self.window + 1))
        self.head = 0
        self.clipped = 0
        self.violations = 0

    def _pos(self, offsets) -> np.ndarray:
        return (self.head + np.asarray(offsets)) % (self.window + 1)

    def profile(self) -> np.ndarray:
        """Credits ordered by offset ``0..T``."""
        return self.credits[..., self._pos(np.arange(self.window + 1))]

    def matured(self) -> np.ndarray:
        return self.credits[..., self.head].copy()

    def credit(self, u: np.ndarray) -> None:
        """Add controls ``u[..., n, tau-1]`` toward offsets ``1..T``, clipped at ``S``."""
        pos = self._pos(np.arange(1, self.window + 1))
        new = self.credits[..., pos] + u
        over = new > self.service_size
        if np.any(over):
            self.clipped += int(np.count_nonzero(over))
            new = np.minimum(new, self.service_size)
        self.credits[..., pos] = new

    def advance(self) -> "ServiceLedger":
        self.credits[..., self.head] = 0.0
        self.head = (self.head + 1) % (self.window + 1)
        return self


def ledger_advance(ledger: ServiceLedger) -> ServiceLedger:
    return ledger.advance()


def demand_vector(subsets, n_users: int) -> np.ndarray:
    b = np.asarray(subsets)
    return ((b[..., None] >> np.arange(n_users)) & 1).astype(float)


def step_reactive(d, S: float) -> np.ndarray:
    return S * np.asarray(d, dtype=float)


def step_proactive(table: PolicyTable, subsets, channels, s: int, ledger: ServiceLedger):
    """One slot of a proactive policy; mutates and returns the ledger.

    Load of user n: ``(S - matured_n) * d_n + sum_tau u_n(tau)``.
    """
    S = table.service_size
    if table.kind == "reactive":
        return step_reactive(demand_vector(subsets, table.n_users), S), ledger
    d = demand_vector(subsets, table.n_users)
    prior = ledger.matured()
    remainder = S - prior
    # on-time delivery: matured credit plus remainder covers exactly S
    bad = (prior > S + 1e-12) | (prior < -1e-12)
    ledger.violations += int(np.count_nonzero(bad & (d > 0)))
    u = table.controls(subsets, channels, s)
    load = np.maximum(remainder, 0.0) * d + u.sum(axis=-1)
    ledger.credit(u)
    ledger.advance()
    return load, ledger
