"""Internal learning engines.

Every engine implements ``init() -> state``, ``get_utility(state, context)``
and ``update(state, action, record) -> state``; fusion, inference and analysis
only ever call these three methods. Engines are immutable; states are copied
on update.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import AgentState, OrlParameters, TrialRecord, as_utility

# Outcomes are divided by this before learning, so EV lives on the same
# order of magnitude as the unit-scale prior.
DEFAULT_PAYSCALE = 100.0


class RlEngine(Protocol):
    name: str
    n_actions: int
    params: object

    def init(self) -> AgentState: ...

    def get_utility(self, state: AgentState, context=None) -> np.ndarray: ...

    def update(self, state: AgentState, action: int, record: TrialRecord) -> AgentState: ...


def _rate(x: float, p: OrlParameters) -> float:
    return p.a_rew if x >= 0 else p.a_pun


def orl_update_ev(state: AgentState, action: int, net: float, p: OrlParameters) -> AgentState:
    ev = state.ev.copy()
    ev[action] += _rate(net, p) * (net - ev[action])
    return state.copy(ev=ev)


def orl_update_ef(state: AgentState, action: int, net: float, p: OrlParameters) -> AgentState:
    ef = state.ef.copy()
    ef[action] += _rate(net, p) * (float(np.sign(net)) - ef[action])
    return state.copy(ef=ef)


def orl_update_ps(state: AgentState, action: int, p: OrlParameters) -> AgentState:
    # decay every deck first, then reset the chosen one
    ps = state.ps / (1.0 + p.k)
    ps[action] = 1.0
    return state.copy(ps=ps)


def orl_get_utility(state: AgentState, p: OrlParameters) -> np.ndarray:
    return as_utility(state.ev + p.beta_f * state.ef + p.beta_p * state.ps)


class OrlEngine:
    name = "orl"
    n_actions = 4

    def __init__(self, params: OrlParameters, payscale: float = DEFAULT_PAYSCALE):
        self.params = params
        self.payscale = payscale

    def init(self) -> AgentState:
        return AgentState.initial(self.n_actions)

    def get_utility(self, state: AgentState, context=None) -> np.ndarray:
        return orl_get_utility(state, self.params)

    def update(self, state: AgentState, action: int, record: TrialRecord) -> AgentState:
        x = record.net / self.payscale
        s = orl_update_ev(state, action, x, self.params)
        s = orl_update_ef(s, action, x, self.params)
        s = orl_update_ps(s, action, self.params)
        return s.copy(trial_index=state.trial_index + 1)


@dataclass(frozen=True)
class HyperbolicParameters:
    k_discount: float
    theta: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if not self.k_discount > 0:
            raise ValueError("k_discount must be positive")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if not 0 <= self.omega <= 1:
            raise ValueError("omega must lie in [0, 1]")


def hyperbolic_get_utility(choice, p: HyperbolicParameters) -> np.ndarray:
    """[immediate value, discounted delayed value] with V = A / (1 + k D)."""
    delayed = choice.delayed_amount / (1.0 + p.k_discount * choice.delay)
    return as_utility([choice.immediate_amount, delayed])


class HyperbolicEngine:
    name = "hyperbolic"
    n_actions = 2

    def __init__(self, params: HyperbolicParameters, payscale: float = DEFAULT_PAYSCALE):
        self.params = params
        self.payscale = payscale

    def init(self) -> AgentState:
        return AgentState.initial(self.n_actions)

    def get_utility(self, state: AgentState, context=None) -> np.ndarray:
        if context is None:
            raise ValueError("hyperbolic engine needs the current DelayChoice as context")
        return hyperbolic_get_utility(context, self.params) / self.payscale

    def update(self, state: AgentState, action: int, record: TrialRecord) -> AgentState:
        # valuation is fixed; nothing is learned from outcomes
        return state.copy(trial_index=state.trial_index + 1)


ENGINES = {"orl": OrlEngine, "hyperbolic": HyperbolicEngine}


def build_engine(name: str, params, **options) -> RlEngine:
    try:
        cls = ENGINES[name]
    except KeyError:
        raise ValueError(f"unknown engine {name!r}; available: {sorted(ENGINES)}") from None
    return cls(params, **options)
