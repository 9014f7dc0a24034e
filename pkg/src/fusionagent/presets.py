"""Population parameter presets.

No fitted posteriors are bundled, so these are hand-set group means with
per-parameter spreads. The gambling-task presets put healthy agents near a
0.7 advantageous rate and clinical agents near 0.4; the delay-task presets
follow the usual ordering of steeper discounting in clinical groups. They are
placeholders for fitted values, recorded as such in every output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import OrlParameters
from .engines import HyperbolicParameters

PROVENANCE = "hand-set preset (no fitted posteriors bundled)"


@dataclass(frozen=True)
class PopulationPreset:
    name: str
    mean: OrlParameters
    spread: dict

    def sample(self, n: int, rng) -> list[OrlParameters]:
        rng = np.random.default_rng(rng)
        base = self.mean.to_dict()
        out = []
        for _ in range(n):
            v = dict(base)
            for key, sd in self.spread.items():
                v[key] = v[key] + sd * rng.standard_normal()
            v["a_rew"] = float(np.clip(v["a_rew"], 0.01, 0.99))
            v["a_pun"] = float(np.clip(v["a_pun"], 0.01, 0.99))
            v["k"] = float(np.clip(v["k"], 0.0, 5.0))
            v["theta"] = float(max(v["theta"], 0.05))
            out.append(OrlParameters(**v))
        return out


_SPREAD = {"a_rew": 0.1, "a_pun": 0.05, "k": 0.3, "beta_f": 0.5, "beta_p": 0.5, "theta": 0.3}

ORL_PRESETS = {
    "healthy": PopulationPreset(
        "healthy", OrlParameters(a_rew=0.3, a_pun=0.2, k=0.5, beta_f=1.0, beta_p=0.5, theta=1.0), _SPREAD
    ),
    "clinical": PopulationPreset(
        "clinical", OrlParameters(a_rew=0.4, a_pun=0.05, k=0.3, beta_f=0.5, beta_p=1.0, theta=1.0), _SPREAD
    ),
}

DD_PRESETS = {
    "healthy": HyperbolicParameters(k_discount=0.01, theta=5.0),
    "clinical": HyperbolicParameters(k_discount=0.05, theta=5.0),
}


def orl_preset(name: str) -> PopulationPreset:
    try:
        return ORL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(ORL_PRESETS)}") from None


def recovery_sampler(rng, theta: float | None = 1.0) -> OrlParameters:
    """True parameters for recovery studies.

    Bounded parameters span their full ranges, the weights span +/-5 (one prior
    sd). ``theta=None`` draws the inverse temperature from U(0.5, 3) instead of
    fixing it.
    """
    return OrlParameters(
        a_rew=float(rng.uniform(0.02, 0.98)),
        a_pun=float(rng.uniform(0.02, 0.98)),
        k=float(rng.uniform(0.0, 5.0)),
        beta_f=float(rng.uniform(-5.0, 5.0)),
        beta_p=float(rng.uniform(-5.0, 5.0)),
        theta=float(rng.uniform(0.5, 3.0)) if theta is None else theta,
        omega=0.0,
    )
