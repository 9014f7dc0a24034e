"""Decision fusion, softmax choice and the simulation loop.

Randomness: a run seed is split into two independent streams, one for action
sampling (exactly one uniform per trial) and one for the environment. Changing
the fusion weight therefore never shifts the payoff sequence of a paired run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ADVANTAGEOUS, OrlParameters, PriorVector, TrialRecord, as_utility
from .engines import DEFAULT_PAYSCALE, OrlEngine, RlEngine
from .tasks import IgtEnvironment, IgtPayoffSchedule, as_seed_sequence

MECHANISMS = ("linear", "multiplicative", "bayesian-average", "attention", "gated")
REQUIRED_PARAMS = {
    "multiplicative": ("temperature",),
    "bayesian-average": ("precision_rl", "precision_prior"),
    "attention": ("temperature",),
    "gated": ("threshold",),
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    mechanism: str = "linear"
    omega: float = 0.25
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown fusion mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        if not 0 <= self.omega <= 1:
            raise ValueError("omega must lie in [0, 1]")


def _values(prior) -> np.ndarray:
    return prior.values if isinstance(prior, PriorVector) else np.asarray(prior, dtype=float)


def fuse_linear(u_rl, prior, omega: float) -> np.ndarray:
    u = np.asarray(u_rl, dtype=float)
    pv = _values(prior)
    if u.shape != pv.shape:
        raise ValueError(f"length mismatch: utility {u.shape} vs prior {pv.shape}")
    return (1.0 - omega) * u + omega * pv


def softmax_policy(u, theta: float) -> np.ndarray:
    z = theta * np.asarray(u, dtype=float)
    z = np.exp(z - z.max())
    return z / z.sum()


def sample_action(probs: np.ndarray, uniform: float) -> int:
    """Inverse-CDF categorical draw from one uniform number."""
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, uniform * cdf[-1], side="right")), len(probs) - 1)


def fuse_alternative(u_rl, prior, cfg: FusionConfig) -> np.ndarray:
    """The non-linear mechanisms compared against linear fusion.

    These definitions are reconstructions; only linear fusion is used by default.
    """
    if cfg.mechanism == "linear":
        raise ValueError("use fuse_linear for the linear mechanism")
    for name in REQUIRED_PARAMS[cfg.mechanism]:
        if name not in cfg.params:
            raise ValueError(f"fusion mechanism {cfg.mechanism!r} needs parameter {name!r}")
    u = np.asarray(u_rl, dtype=float)
    pv = _values(prior)
    if u.shape != pv.shape:
        raise ValueError(f"length mismatch: utility {u.shape} vs prior {pv.shape}")
    m = cfg.mechanism
    if m == "multiplicative":
        tau = float(cfg.params["temperature"])
        joint = softmax_policy(u, 1.0 / tau) * softmax_policy(pv, 1.0 / tau)
        joint /= joint.sum()
        return tau * np.log(joint)
    if m == "bayesian-average":
        w_rl = float(cfg.params["precision_rl"])
        w_pr = float(cfg.params["precision_prior"])
        return (w_rl * u + w_pr * pv) / (w_rl + w_pr)
    if m == "attention":
        alpha = softmax_policy(np.abs(pv), 1.0 / float(cfg.params["temperature"]))
        return (1.0 - alpha) * u + alpha * pv
    # gated
    return pv.copy() if np.max(np.abs(u)) < float(cfg.params["threshold"]) else u.copy()


def fuse(u_rl, prior, cfg: FusionConfig) -> np.ndarray:
    if cfg.mechanism == "linear":
        return fuse_linear(u_rl, prior, cfg.omega)
    return fuse_alternative(u_rl, prior, cfg)


def seed_streams(seed) -> tuple[np.random.Generator, np.random.SeedSequence]:
    """(action generator, environment seed sequence) for a run seed."""
    action_ss, env_ss = as_seed_sequence(seed).spawn(2)
    return np.random.default_rng(action_ss), env_ss


@dataclass
class TrialLog:
    trial: int
    u_rl: np.ndarray
    u_combined: np.ndarray
    probs: np.ndarray
    action: int
    record: TrialRecord


@dataclass
class SimulationRun:
    engine: str
    parameters: object
    prior: PriorVector
    fusion: FusionConfig | None
    trial_count: int
    seed: int
    records: list[TrialLog] = field(default_factory=list)

    @property
    def actions(self) -> np.ndarray:
        return np.array([r.action for r in self.records], dtype=int)

    @property
    def nets(self) -> np.ndarray:
        return np.array([r.record.net for r in self.records], dtype=float)

    def advantageous_rate(self, good=ADVANTAGEOUS) -> float:
        return float(np.isin(self.actions, good).mean())


def simulate_agent(engine: RlEngine, environment, prior, fusion: FusionConfig | None, trial_count: int,
                   seed=0, action_rng: np.random.Generator = None) -> SimulationRun:
    """Run one agent through ``trial_count`` trials.

    ``fusion=None`` is the bare engine (no fusion step). The environment should
    be built from the second stream of ``seed_streams(seed)`` for paired runs;
    ``igt_agent`` does this.
    """
    if action_rng is None:
        action_rng, _ = seed_streams(seed)
    prior = prior if isinstance(prior, PriorVector) else PriorVector(np.asarray(prior, dtype=float))
    theta = engine.params.theta
    run = SimulationRun(engine.name, engine.params, prior, fusion, trial_count, seed)
    state = engine.init()
    for t in range(trial_count):
        try:
            context = environment.observe()
            u_rl = engine.get_utility(state, context)
            u_comb = u_rl if fusion is None else as_utility(fuse(u_rl, prior, fusion))
            probs = softmax_policy(u_comb, theta)
            action = sample_action(probs, action_rng.random())
            record = environment.step(action)
            state = engine.update(state, action, record)
        except Exception as e:
            raise SimulationError(f"trial {t}: {e}") from e
        run.records.append(TrialLog(t, u_rl, u_comb, probs, action, record))
    return run


def igt_agent(params: OrlParameters, prior=None, fusion: FusionConfig | None = "default", trial_count: int = 100,
              seed=0, schedule: IgtPayoffSchedule = None, shuffle: bool = True,
              payscale: float = DEFAULT_PAYSCALE) -> SimulationRun:
    """Convenience wrapper: ORL engine on the gambling task with paired streams."""
    if prior is None:
        prior = PriorVector.zeros(4)
    if fusion == "default":
        fusion = FusionConfig("linear", params.omega)
    action_rng, env_ss = seed_streams(seed)
    env = IgtEnvironment(schedule, env_ss, shuffle)
    return simulate_agent(OrlEngine(params, payscale), env, prior, fusion, trial_count, seed, action_rng)


class CohortSimulator:
    """Lock-step linear-fusion ORL simulation of many agents on the gambling task.

    Agent ``i`` consumes exactly the random numbers ``igt_agent`` would use with
    ``seeds[i]``: its action uniforms and its per-deck payoff tables are drawn
    up front from the same streams. State persists across ``run`` calls so
    priors can change between epochs.
    """

    def __init__(self, params: list[OrlParameters], seeds, trial_count: int = 100,
                 schedule: IgtPayoffSchedule = None, shuffle: bool = True,
                 payscale: float = DEFAULT_PAYSCALE):
        n = len(params)
        if len(seeds) != n:
            raise ValueError("one seed per agent")
        P = np.array([p.as_array() for p in params]).reshape(n, 7)
        self.a_rew, self.a_pun, self.k, self.beta_f, self.beta_p, self.theta, self.omega = P.T
        self.n, self.T = n, trial_count
        self.payscale = payscale
        self.uniforms = np.empty((n, trial_count))
        self.gains = np.empty((n, 4, trial_count))
        self.losses = np.empty((n, 4, trial_count))
        for i, s in enumerate(seeds):
            action_rng, env_ss = seed_streams(s)
            self.uniforms[i] = action_rng.random(trial_count)
            env = IgtEnvironment(schedule, env_ss, shuffle)
            self.gains[i], self.losses[i] = env.payoff_table(trial_count)
        self.ev = np.zeros((n, 4))
        self.ef = np.zeros((n, 4))
        self.ps = np.zeros((n, 4))
        self.draws = np.zeros((n, 4), dtype=int)
        self.t = 0
        self.actions = np.zeros((n, trial_count), dtype=int)
        self.nets = np.zeros((n, trial_count))
        self.gain_hist = np.zeros((n, trial_count))
        self.loss_hist = np.zeros((n, trial_count))

    def run(self, n_trials: int, priors, omega=None) -> None:
        """Advance every agent ``n_trials`` trials with fusion prior rows ``priors`` (n, 4)."""
        priors = np.broadcast_to(np.asarray(priors, dtype=float), (self.n, 4))
        om = self.omega if omega is None else np.broadcast_to(np.asarray(omega, dtype=float), (self.n,))
        rows = np.arange(self.n)
        for _ in range(n_trials):
            t = self.t
            if t >= self.T:
                raise SimulationError("cohort ran past its trial budget")
            u = self.ev + self.beta_f[:, None] * self.ef + self.beta_p[:, None] * self.ps
            u = (1.0 - om)[:, None] * u + om[:, None] * priors
            z = self.theta[:, None] * u
            z = np.exp(z - z.max(axis=1, keepdims=True))
            probs = z / z.sum(axis=1, keepdims=True)
            cdf = np.cumsum(probs, axis=1)
            a = (cdf <= (self.uniforms[:, t] * cdf[:, -1])[:, None]).sum(axis=1)
            a = np.minimum(a, 3)
            count = self.draws[rows, a]
            gain = self.gains[rows, a, count]
            loss = self.losses[rows, a, count]
            net = gain + loss
            self.draws[rows, a] += 1
            x = net / self.payscale
            rate = np.where(x >= 0, self.a_rew, self.a_pun)
            self.ev[rows, a] += rate * (x - self.ev[rows, a])
            self.ef[rows, a] += rate * (np.sign(x) - self.ef[rows, a])
            self.ps /= (1.0 + self.k)[:, None]
            self.ps[rows, a] = 1.0
            self.actions[:, t] = a
            self.nets[:, t] = net
            self.gain_hist[:, t] = gain
            self.loss_hist[:, t] = loss
            self.t += 1

    def advantageous_rates(self) -> np.ndarray:
        return np.isin(self.actions[:, : self.t], ADVANTAGEOUS).mean(axis=1)


def simulate_cohort(params: list[OrlParameters], seeds, prior=None, omega=None, trial_count: int = 100,
                    schedule: IgtPayoffSchedule = None, shuffle: bool = True) -> CohortSimulator:
    """Simulate a cohort under linear fusion. ``omega=None`` uses each agent's own omega."""
    sim = CohortSimulator(params, seeds, trial_count, schedule, shuffle)
    pv = np.zeros(4) if prior is None else _values(prior)
    sim.run(trial_count, pv, omega)
    return sim

