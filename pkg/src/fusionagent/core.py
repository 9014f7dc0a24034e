"""Domain types shared by every module.

Actions on the gambling task are indexed A, B, C, D -> 0, 1, 2, 3. Decks C and D
are the advantageous ones. Payoffs are abstract integer points.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

DECKS = ("A", "B", "C", "D")
ADVANTAGEOUS = (2, 3)
PARAM_NAMES = ("a_rew", "a_pun", "k", "beta_f", "beta_p", "theta", "omega")

# (lower, upper); None means unbounded on that side
PARAM_BOUNDS = {
    "a_rew": (0.0, 1.0),
    "a_pun": (0.0, 1.0),
    "k": (0.0, 5.0),
    "beta_f": (None, None),
    "beta_p": (None, None),
    "theta": (0.0, None),
    "omega": (0.0, 1.0),
}


def deck_label(action: int) -> str:
    return DECKS[action]


def deck_index(label) -> int:
    """Map 'A'..'D' (any case) or 1..4 to 0..3."""
    if isinstance(label, str):
        s = label.strip().upper()
        if s in DECKS:
            return DECKS.index(s)
        if s.isdigit():
            label = int(s)
        else:
            raise ValueError(f"unknown deck code {label!r}")
    value = int(label)
    if not 1 <= value <= 4:
        raise ValueError(f"deck code {label!r} out of range 1..4")
    return value - 1


@dataclass(frozen=True)
class OrlParameters:
    a_rew: float
    a_pun: float
    k: float
    beta_f: float
    beta_p: float
    theta: float = 1.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "OrlParameters":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "OrlParameters":
        return dataclasses.replace(self, **changes)


def validate_parameters(p: OrlParameters) -> list[str]:
    """Return the list of range violations; empty means valid."""
    problems = []
    for name in PARAM_NAMES:
        value = getattr(p, name)
        lo, hi = PARAM_BOUNDS[name]
        if not np.isfinite(value):
            problems.append(f"{name} is not finite")
            continue
        if lo is not None and value < lo:
            problems.append(f"{name} < {lo:g}")
        if hi is not None and value > hi:
            problems.append(f"{name} > {hi:g}")
    return problems


@dataclass(frozen=True, eq=False)
class AgentState:
    ev: np.ndarray
    ef: np.ndarray
    ps: np.ndarray
    trial_index: int = 0

    @classmethod
    def initial(cls, n_actions: int = 4) -> "AgentState":
        return cls(np.zeros(n_actions), np.zeros(n_actions), np.zeros(n_actions), 0)

    @property
    def n_actions(self) -> int:
        return len(self.ev)

    def copy(self, **changes) -> "AgentState":
        fields = {
            "ev": self.ev.copy(),
            "ef": self.ef.copy(),
            "ps": self.ps.copy(),
            "trial_index": self.trial_index,
        }
        fields.update(changes)
        return AgentState(**fields)


@dataclass(frozen=True)
class TrialRecord:
    action: int
    gain: float
    loss: float
    net: float = None

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError(f"gain must be non-negative, got {self.gain}")
        if self.loss > 0:
            raise ValueError(f"loss must be non-positive, got {self.loss}")
        total = self.gain + self.loss
        if self.net is None:
            object.__setattr__(self, "net", total)
        elif not np.isclose(self.net, total, rtol=0, atol=1e-9):
            raise ValueError(f"net {self.net} != gain + loss = {total}")


def as_utility(values) -> np.ndarray:
    u = np.asarray(values, dtype=float)
    if u.ndim != 1:
        raise ValueError("utility vector must be one-dimensional")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"utility vector has non-finite entries: {u}")
    return u


@dataclass(frozen=True, eq=False)
class PriorVector:
    """Static mean-zero utility prior over actions."""

    values: np.ndarray
    method: str = "max-abs"
    source: str = "explicit"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = as_utility(self.values)
        mean = v.mean()
        if abs(mean) > 1e-9:
            warnings.warn(f"prior mean {mean:.3g} is not zero; re-centering", stacklevel=3)
            v = v - mean
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @classmethod
    def zeros(cls, n_actions: int = 4) -> "PriorVector":
        return cls(np.zeros(n_actions), method="none", source="neutral")

    def flipped(self) -> "PriorVector":
        return PriorVector(-self.values, self.method, self.source + ":flipped", dict(self.metadata))


def advantageous_rate(actions) -> float:
    a = np.asarray(actions)
    return float(np.isin(a, ADVANTAGEOUS).mean())
