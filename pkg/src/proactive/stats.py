"""Explicit probability tables over demand subsets and channel vectors.

Demand subsets are bitmasks (bit ``n`` set when user ``n`` requests), listed
in ascending order ``0 .. 2**N - 1``. Channel vectors are tuples of state
indices listed lexicographically, i.e. in C order of ``np.ndindex(*K)``; the
position in that order is the "flat channel index" used by every table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import ChannelModel, DemandModel, Scenario


@dataclass(frozen=True)
class DemandTable:
    probs: np.ndarray  # shape (2**N,), indexed by bitmask
    n_users: int

    @cached_property
    def membership(self) -> np.ndarray:
        """``membership[b, n]`` is 1.0 when user ``n`` is in subset ``b``."""
        masks = np.arange(1 << self.n_users)
        return ((masks[:, None] >> np.arange(self.n_users)) & 1).astype(float)

    def entries(self) -> list[tuple[int, float]]:
        return [(b, float(p)) for b, p in enumerate(self.probs)]

    def marginals(self) -> np.ndarray:
        return self.probs @ self.membership


@dataclass(frozen=True)
class ChannelTable:
    """``probs[s, c]`` is ``P(g = vector c | slot index s)``."""

    probs: np.ndarray  # shape (Q, prod K)
    sizes: tuple[int, ...]
    gains: np.ndarray  # shape (prod K, N), gain vector of each flat index

    @property
    def period(self) -> int:
        return self.probs.shape[0]

    @cached_property
    def index_tuples(self) -> list[tuple[int, ...]]:
        return list(np.ndindex(*self.sizes))

    def entries(self, s: int) -> list[tuple[tuple[int, ...], float]]:
        return [(k, float(p)) for k, p in zip(self.index_tuples, self.probs[s])]

    def marginal(self, s: int, n: int) -> np.ndarray:
        return self.probs[s].reshape(self.sizes).sum(
            axis=tuple(i for i in range(len(self.sizes)) if i != n)
        )


def demand_table_from_model(demand: DemandModel, n_users: int) -> DemandTable:
    problems = demand.violations(n_users)
    if problems:
        raise ValueError("; ".join(problems))
    if demand.joint is not None:
        probs = np.zeros(1 << n_users)
        for mask, p in demand.joint.items():
            probs[mask] = p
        return DemandTable(probs, n_users)
    pi = np.asarray(demand.marginals, dtype=float)
    member = DemandTable(np.zeros(1 << n_users), n_users).membership
    probs = np.prod(np.where(member == 1.0, pi, 1.0 - pi), axis=1)
    return DemandTable(probs, n_users)


def _gain_vectors(channel: ChannelModel) -> np.ndarray:
    grids = [channel.gains(n) for n in range(channel.n_users)]
    return np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, channel.n_users)


def channel_slice(channel: ChannelModel, s: int) -> np.ndarray:
    """``P(g | s)`` over flat channel indices for one slot index."""
    if not 0 <= s < channel.period:
        raise IndexError(f"slot index {s} outside 0..{channel.period - 1}")
    sizes = channel.sizes
    if channel.joint is not None:
        out = np.zeros(sizes)
        for key, p in channel.joint[s].items():
            out[key] = p
        return out.ravel()
    out = np.ones(())
    for psi in channel.probs[s]:
        out = np.multiply.outer(out, np.asarray(psi, dtype=float))
    return out.ravel()


def channel_table_from_model(channel: ChannelModel, s: int | None = None) -> ChannelTable:
    """Channel table for slot index ``s``, or for every slot index when ``s`` is None."""
    slots = range(channel.period) if s is None else [s]
    probs = np.array([channel_slice(channel, q) for q in slots])
    return ChannelTable(probs, channel.sizes, _gain_vectors(channel))


def slot_distribution(Q: int) -> np.ndarray:
    if Q < 1:
        raise ValueError("period must be >= 1")
    return np.full(Q, 1.0 / Q)


def window_weights(Q: int, T: int) -> np.ndarray:
    """``W[s, s']`` is the fraction of offsets ``tau = 1..T`` with ``(s + tau) % Q == s'``.

    When ``T`` is a multiple of ``Q`` every entry is ``1/Q``.
    """
    if T < 1:
        raise ValueError("window T must be >= 1")
    W = np.zeros((Q, Q))
    for s in range(Q):
        for tau in range(1, T + 1):
            W[s, (s + tau) % Q] += 1.0
    return W / T


@dataclass(frozen=True)
class Tables:
    """Everything the bounds and the simulator need, built once per scenario."""

    scenario: Scenario
    demand: DemandTable
    channel: ChannelTable

    @property
    def n_users(self) -> int:
        return self.scenario.n_users

    @property
    def n_subsets(self) -> int:
        return 1 << self.n_users

    @property
    def n_channels(self) -> int:
        return self.channel.probs.shape[1]

    @property
    def period(self) -> int:
        return self.channel.period


def build_tables(scenario: Scenario) -> Tables:
    return Tables(
        scenario,
        demand_table_from_model(scenario.demand, scenario.n_users),
        channel_table_from_model(scenario.channel),
    )
