"""Problem instance: users, demand statistics, channel statistics, cost.

Users are indexed ``0..N-1`` in input order. Channel states of a user are
stored worst-first (strictly increasing gain), so state index 0 is the bad
state ``g^(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

PROB_TOL = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario cannot be built or loaded."""


@dataclass(frozen=True)
class ChannelStateSpace:
    """Ordered gains ``g^(1) < ... < g^(K)`` of one user."""

    states: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(float(g) for g in self.states))

    @property
    def size(self) -> int:
        return len(self.states)

    def violations(self, label: str = "") -> list[str]:
        out = []
        if not self.states:
            out.append(f"{label}channel state list is empty")
            return out
        if any(not math.isfinite(g) or g <= 0 for g in self.states):
            out.append(f"{label}channel gains must be positive")
        if any(b <= a for a, b in zip(self.states, self.states[1:])):
            out.append(f"{label}channel gains must be strictly increasing")
        return out


@dataclass(frozen=True)
class DemandModel:
    """Independent per-user request probabilities, or a joint subset table.

    ``joint`` maps a subset bitmask (bit n set when user n requests) to its
    probability. Missing bitmasks have probability zero.
    """

    marginals: tuple[float, ...] | None = None
    joint: dict[int, float] | None = None

    def __post_init__(self):
        if self.marginals is not None:
            object.__setattr__(self, "marginals", tuple(float(p) for p in self.marginals))
        if self.joint is not None:
            object.__setattr__(self, "joint", {int(k): float(v) for k, v in self.joint.items()})

    @property
    def kind(self) -> str:
        return "independent" if self.joint is None else "joint"

    @classmethod
    def independent(cls, marginals: Sequence[float]) -> "DemandModel":
        return cls(marginals=tuple(marginals))

    @classmethod
    def from_joint(cls, table: dict[int, float]) -> "DemandModel":
        return cls(joint=dict(table))

    def violations(self, n_users: int) -> list[str]:
        out = []
        if (self.marginals is None) == (self.joint is None):
            return ["demand model needs exactly one of marginals or joint"]
        if self.marginals is not None:
            if len(self.marginals) != n_users:
                out.append(
                    f"demand marginals have {len(self.marginals)} entries, expected {n_users}"
                )
            for n, p in enumerate(self.marginals):
                if not (0.0 <= p <= 1.0):
                    out.append(f"demand probability out of range for user {n}: {p}")
            return out
        total = 0.0
        for mask, p in self.joint.items():
            if mask < 0 or mask >= 1 << n_users:
                out.append(f"demand subset bitmask {mask} outside 0..{(1 << n_users) - 1}")
            if not (p >= 0.0 and math.isfinite(p)):
                out.append(f"demand probability out of range for subset {mask}: {p}")
            else:
                total += p
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"joint demand probabilities do not sum to 1 (sum={total:.12g})")
        return out


@dataclass(frozen=True)
class ChannelModel:
    """Cyclo-stationary channel statistics with period ``Q``.

    Independent form: ``probs[s][n][k]`` is the probability that user ``n``
    sees state ``k`` at slot index ``s``. Joint form: ``joint[s]`` maps a
    tuple of state indices ``(k_0, ..., k_{N-1})`` to its probability.
    """

    spaces: tuple[ChannelStateSpace, ...]
    probs: tuple[tuple[tuple[float, ...], ...], ...] | None = None
    joint: tuple[dict[tuple[int, ...], float], ...] | None = None

    def __post_init__(self):
        spaces = tuple(
            s if isinstance(s, ChannelStateSpace) else ChannelStateSpace(tuple(s))
            for s in self.spaces
        )
        object.__setattr__(self, "spaces", spaces)
        if self.probs is not None:
            probs = tuple(
                tuple(tuple(float(p) for p in user) for user in slot) for slot in self.probs
            )
            object.__setattr__(self, "probs", probs)
        if self.joint is not None:
            joint = tuple(
                {tuple(int(i) for i in key): float(v) for key, v in slot.items()}
                for slot in self.joint
            )
            object.__setattr__(self, "joint", joint)

    @classmethod
    def time_invariant(cls, states, probs) -> "ChannelModel":
        """One slot index; ``states[n]`` gains and ``probs[n]`` probabilities per user."""
        return cls(spaces=tuple(states), probs=(tuple(probs),))

    @classmethod
    def cyclic(cls, states, probs_per_slot) -> "ChannelModel":
        return cls(spaces=tuple(states), probs=tuple(probs_per_slot))

    @property
    def kind(self) -> str:
        return "independent" if self.joint is None else "joint"

    @property
    def period(self) -> int:
        if self.probs is not None:
            return len(self.probs)
        return len(self.joint) if self.joint is not None else 0

    @property
    def n_users(self) -> int:
        return len(self.spaces)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(sp.size for sp in self.spaces)

    def gains(self, n: int) -> np.ndarray:
        return np.asarray(self.spaces[n].states, dtype=float)

    def time_averaged(self) -> "ChannelModel":
        """Period-1 model whose statistics are the uniform average over slot indices."""
        Q = self.period
        if self.probs is not None:
            avg = [
                tuple(sum(self.probs[s][n][k] for s in range(Q)) / Q for k in range(K))
                for n, K in enumerate(self.sizes)
            ]
            return ChannelModel(self.spaces, probs=(tuple(avg),))
        keys = sorted({key for slot in self.joint for key in slot})
        avg = {key: sum(slot.get(key, 0.0) for slot in self.joint) / Q for key in keys}
        return ChannelModel(self.spaces, joint=(avg,))

    def violations(self) -> list[str]:
        out = []
        for n, sp in enumerate(self.spaces):
            out.extend(sp.violations(f"user {n}: "))
        if (self.probs is None) == (self.joint is None):
            out.append("channel model needs exactly one of probs or joint")
            return out
        if self.period < 1:
            out.append("channel period must be >= 1")
            return out
        sizes = self.sizes
        if self.probs is not None:
            for s, slot in enumerate(self.probs):
                if len(slot) != len(sizes):
                    out.append(f"slot {s}: {len(slot)} users in probs, expected {len(sizes)}")
                    continue
                for n, psi in enumerate(slot):
                    if len(psi) != sizes[n]:
                        out.append(
                            f"slot {s}, user {n}: {len(psi)} probabilities for {sizes[n]} states"
                        )
                    if any(not (p >= 0.0 and math.isfinite(p)) for p in psi):
                        out.append(f"slot {s}, user {n}: probability out of range")
                    elif abs(sum(psi) - 1.0) > PROB_TOL:
                        out.append(
                            f"slot {s}, user {n}: probabilities do not sum to 1 (sum={sum(psi):.12g})"
                        )
            return out
        for s, table in enumerate(self.joint):
            total = 0.0
            for key, p in table.items():
                if len(key) != len(sizes) or any(
                    not (0 <= k < K) for k, K in zip(key, sizes)
                ):
                    out.append(f"slot {s}: state index tuple {key} outside the state spaces")
                if not (p >= 0.0 and math.isfinite(p)):
                    out.append(f"slot {s}: probability out of range for {key}")
                else:
                    total += p
            if abs(total - 1.0) > PROB_TOL:
                out.append(f"slot {s}: joint channel probabilities do not sum to 1 (sum={total:.12g})")
        return out


@dataclass(frozen=True)
class CostFunction:
    """Per-slot cost ``C(L; g)``.

    The built-in ``poly`` family is ``sum_n L_n**p / g_n``. A custom evaluator
    takes arrays ``L`` and ``g`` of shape ``(..., N)`` and returns shape ``(...)``;
    an optional ``gradient`` returns ``dC/dL`` with the shape of ``L``.
    """

    family: str = "poly"
    exponent: float = 4.0
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )

    @classmethod
    def poly(cls, exponent: float = 4.0) -> "CostFunction":
        return cls(family="poly", exponent=float(exponent))

    @classmethod
    def custom(cls, evaluator, gradient=None) -> "CostFunction":
        return cls(family="custom", exponent=float("nan"), evaluator=evaluator, gradient=gradient)

    @property
    def has_gradient(self) -> bool:
        return self.family == "poly" or self.gradient is not None

    def __call__(self, L, g) -> np.ndarray:
        L = np.asarray(L, dtype=float)
        g = np.asarray(g, dtype=float)
        if self.family == "poly":
            return np.sum(L**self.exponent / g, axis=-1)
        return np.asarray(self.evaluator(L, g), dtype=float)

    def dload(self, L, g) -> np.ndarray:
        """Partial derivatives with respect to each load."""
        L = np.asarray(L, dtype=float)
        g = np.asarray(g, dtype=float)
        if self.family == "poly":
            p = self.exponent
            return p * L ** (p - 1) / g
        if self.gradient is not None:
            return np.asarray(self.gradient(L, g), dtype=float)
        h = 1e-6
        out = np.empty(np.broadcast_shapes(L.shape, g.shape))
        for n in range(L.shape[-1]):
            step = np.zeros(L.shape[-1])
            step[n] = h
            lo = np.maximum(L - step, 0.0)
            out[..., n] = (self(L + step, g) - self(lo, g)) / (L[..., n] + h - lo[..., n])
        return out

    def violations(self, n_users: int, seed: int = 0) -> list[str]:
        """Numerical probes of convexity and monotonicity on random samples."""
        if self.family == "poly":
            p = self.exponent
            if not (math.isfinite(p) and p > 1):
                return [f"poly cost exponent must exceed 1 for strict convexity, got {p}"]
            return []
        if self.family != "custom" or self.evaluator is None:
            return [f"unknown cost family {self.family!r}"]
        rng = np.random.default_rng(seed)
        out = []
        try:
            for _ in range(20):
                La, Lb = rng.uniform(0, 2, (2, n_users))
                g = rng.uniform(0.5, 2, n_users)
                mid = float(self(0.5 * (La + Lb), g))
                if not mid < 0.5 * (float(self(La, g)) + float(self(Lb, g))):
                    out.append("cost is not strictly convex in the load")
                    break
                n = rng.integers(n_users)
                bump = np.zeros(n_users)
                bump[n] = 0.1
                if not float(self(La + bump, g)) > float(self(La, g)):
                    out.append("cost is not strictly increasing in the load")
                    break
                if float(self(La, g + bump)) > float(self(La, g)) + 1e-12:
                    out.append("cost increases with the channel gain")
                    break
                if float(self(La, g)) < 0:
                    out.append("cost is negative")
                    break
        except Exception as exc:  # noqa: BLE001 - report, never raise
            out.append(f"cost evaluator failed: {exc}")
        return out


def eval_cost(cost: CostFunction, L, g) -> float:
    """Cost of one slot with load vector ``L`` and gain vector ``g``."""
    L = np.asarray(L, dtype=float)
    g = np.asarray(g, dtype=float)
    if L.shape != g.shape or L.ndim != 1:
        raise ValueError(f"load and gain vectors differ in shape: {L.shape} vs {g.shape}")
    if np.any(g <= 0):
        raise ValueError("channel gains must be positive")
    if np.any(L < 0):
        raise ValueError("loads must be nonnegative")
    return float(cost(L, g))


@dataclass(frozen=True)
class Scenario:
    n_users: int
    service_size: float
    demand: DemandModel
    channel: ChannelModel
    cost: CostFunction = CostFunction()

    @property
    def period(self) -> int:
        return self.channel.period

    def with_channel(self, channel: ChannelModel) -> "Scenario":
        return Scenario(self.n_users, self.service_size, self.demand, channel, self.cost)


def validate_scenario(scenario) -> list[str]:
    """All invariant violations of a scenario; an empty list means valid."""
    out = []
    try:
        N = scenario.n_users
        if not isinstance(N, (int, np.integer)) or N < 1:
            out.append(f"user count must be a positive integer, got {N!r}")
            return out
        S = scenario.service_size
        if not (isinstance(S, (int, float)) and math.isfinite(S) and S > 0):
            out.append(f"service size must be positive, got {S!r}")
        out.extend(scenario.demand.violations(N))
        ch = scenario.channel
        if ch.n_users != N:
            out.append(f"channel model describes {ch.n_users} users, expected {N}")
        out.extend(ch.violations())
        out.extend(scenario.cost.violations(N))
    except Exception as exc:  # noqa: BLE001 - validation never raises
        out.append(f"malformed scenario: {exc}")
    return out


def check_scenario(scenario: Scenario) -> Scenario:
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError("; ".join(problems))
    return scenario


# -- config files ------------------------------------------------------------


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a scenario from a parsed config document (see README for the schema)."""
    try:
        N = int(doc["users"])
        S = float(doc.get("service_size", 1.0))
        dem = doc["demand"]
        if "marginals" in dem:
            demand = DemandModel.independent(dem["marginals"])
        else:
            demand = DemandModel.from_joint({int(k): v for k, v in dem["joint"].items()})
        ch = doc["channel"]
        states = ch["states"]
        if states and _is_number(states[0]):
            states = [states] * N
        if "joint" in ch:
            joint = []
            for slot in ch["joint"]:
                joint.append(
                    {tuple(int(i) for i in str(k).split(",")): v for k, v in slot.items()}
                )
            channel = ChannelModel(spaces=tuple(tuple(s) for s in states), joint=tuple(joint))
        else:
            probs = ch["probs"]
            # depth 2 (users x states) is shorthand for a single slot index
            if probs and probs[0] and _is_number(probs[0][0]):
                probs = [probs]
            channel = ChannelModel(spaces=tuple(tuple(s) for s in states), probs=tuple(probs))
        period = ch.get("period")
        if period is not None and int(period) != channel.period:
            raise ScenarioError(
                f"channel period {period} does not match {channel.period} probability slots"
            )
        c = doc.get("cost", {}) or {}
        family = c.get("family", "poly")
        if family != "poly":
            raise ScenarioError(f"unsupported cost family {family!r} in config")
        cost = CostFunction.poly(c.get("exponent", 4))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ScenarioError(f"malformed scenario config: {exc!r}") from exc
    return Scenario(N, S, demand, channel, cost)


def scenario_to_dict(scenario: Scenario) -> dict:
    ch = scenario.channel
    doc = {"users": scenario.n_users, "service_size": scenario.service_size}
    if scenario.demand.joint is None:
        doc["demand"] = {"marginals": list(scenario.demand.marginals)}
    else:
        doc["demand"] = {"joint": dict(scenario.demand.joint)}
    chd = {"period": ch.period, "states": [list(sp.states) for sp in ch.spaces]}
    if ch.joint is None:
        chd["probs"] = [[list(psi) for psi in slot] for slot in ch.probs]
    else:
        chd["joint"] = [
            {",".join(str(i) for i in key): p for key, p in slot.items()} for slot in ch.joint
        ]
    doc["channel"] = chd
    doc["cost"] = {"family": scenario.cost.family, "exponent": scenario.cost.exponent}
    return doc


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected a mapping at the top level")
    return scenario_from_dict(doc)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


def single_user(pi, psi_bad, gains=(1.0, 2.0), S=1.0, exponent=4.0) -> Scenario:
    """One user, two channel states, time-invariant statistics."""
    return Scenario(
        1,
        S,
        DemandModel.independent([pi]),
        ChannelModel.time_invariant([gains], [[psi_bad, 1.0 - psi_bad]]),
        CostFunction.poly(exponent),
    )


def symmetric(n_users, pi, psi_bad_profile, gains, S=1.0, exponent=4.0) -> Scenario:
    """Identical users with two states; ``psi_bad_profile`` gives P(bad) per slot index."""
    probs = [[[pb, 1.0 - pb]] * n_users for pb in psi_bad_profile]
    return Scenario(
        n_users,
        S,
        DemandModel.independent([pi] * n_users),
        ChannelModel.cyclic([tuple(gains)] * n_users, probs),
        CostFunction.poly(exponent),
    )
