"""Proactive wireless scheduling under predictable demand and channel statistics."""

from .model import (
    ChannelModel,
    ChannelStateSpace,
    CostFunction,
    DemandModel,
    Scenario,
    eval_cost,
    load_scenario,
    validate_scenario,
)
from .policy import PolicyTable, ServiceLedger, compile_ti, compile_tv, reactive_policy
from .sim import SimConfig, SimResult, run
from .solver import LowerBoundSolution, SolverOptions, reactive_cost, solve

__version__ = "0.1.0"
