"""Experiment drivers: consistency, prompt ablation, omega sweeps, fusion comparison, delay task."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ADVANTAGEOUS, OrlParameters, PriorVector
from .engines import HyperbolicEngine, HyperbolicParameters, OrlEngine
from .fusion import FusionConfig, seed_streams, simulate_agent, simulate_cohort
from .presets import DD_PRESETS, orl_preset
from .priors import PolicyTranscript, aggregate_prior, static_prior
from .stats import TrajectorySummary, chi_square_uniformity, expected_counts, kl_divergence, pearson_r
from .tasks import DelayEnvironment, DelayGrid, IgtEnvironment, dd_generate_trials


@dataclass(frozen=True)
class ConsistencyReport:
    pearson_r: float | None
    mae: float
    behavioral_difference: float
    subject_count: int


def consistency_analysis(rates_a, rates_b) -> ConsistencyReport:
    """Compare per-subject advantageous rates from two paired cohorts."""
    a = np.asarray(rates_a, dtype=float)
    b = np.asarray(rates_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cohort mismatch: {a.shape} vs {b.shape}")
    return ConsistencyReport(
        pearson_r=pearson_r(a, b),
        mae=float(np.mean(np.abs(a - b))),
        behavioral_difference=float(abs(a.mean() - b.mean())),
        subject_count=len(a),
    )


def mixed_population(n: int, rng) -> list[OrlParameters]:
    """Half healthy, half clinical agents (healthy first)."""
    rng = np.random.default_rng(rng)
    half = n // 2
    return orl_preset("healthy").sample(n - half, rng) + orl_preset("clinical").sample(half, rng)


def expected_rates(params: list[OrlParameters], seeds, prior=None, omega=None, replicates: int = 20,
                   trial_count: int = 100) -> np.ndarray:
    """Per-subject advantageous rate averaged over ``replicates`` runs.

    ``seeds[i]`` is expanded into ``replicates`` child streams, so two calls
    with the same seeds are paired run by run.
    """
    n = len(params)
    run_seeds = [s for seed in seeds for s in np.random.SeedSequence(seed).spawn(replicates)]
    reps = [p for p in params for _ in range(replicates)]
    sim = simulate_cohort(reps, run_seeds, prior, omega, trial_count)
    return sim.advantageous_rates().reshape(n, replicates).mean(axis=1)


def consistency_experiment(n_subjects: int = 50, trial_count: int = 100, omega: float = 0.25, prior="neutral",
                           replicates: int = 20, seed: int = 0) -> ConsistencyReport:
    """Bare ORL against a hybrid agent on paired seeds, compared subject by subject."""
    rng = np.random.default_rng([seed, 1])
    params = mixed_population(n_subjects, rng)
    seeds = [[seed, i] for i in range(n_subjects)]
    pv = static_prior(prior) if isinstance(prior, str) else prior
    pure = expected_rates(params, seeds, None, 0.0, replicates, trial_count)
    hybrid = expected_rates(params, seeds, pv, omega, replicates, trial_count)
    return consistency_analysis(pure, hybrid)


# ---------------------------------------------------------------- prompt ablation


@dataclass(frozen=True)
class AblationStats:
    label: str
    trials: int
    chi_square: float
    p_value: float
    kl_uniform: float
    std: float
    policy: tuple


def ablation_stats(prob, n_trials: int, label: str = "overall") -> AblationStats:
    """Uniformity statistics for a mean policy over ``n_trials`` trials.

    The chi-square test uses the policy as expected choice counts, rounded to
    integers summing to ``n_trials``.
    """
    prob = np.asarray(prob, dtype=float)
    counts = expected_counts(prob, n_trials)
    stat, p = chi_square_uniformity(counts)
    uniform = np.full(len(prob), 1.0 / len(prob))
    return AblationStats(label, n_trials, stat, p, kl_divergence(prob, uniform), float(np.std(prob)),
                         tuple(float(x) for x in prob))


def transcript_ablation(transcript: PolicyTranscript, block: int = 20) -> list[AblationStats]:
    """Overall statistics followed by one row per block of ``block`` trials."""
    m = transcript.matrix()
    rows = [ablation_stats(aggregate_prior(transcript), len(m))]
    for start in range(0, len(m), block):
        chunk = m[start:start + block]
        rows.append(ablation_stats(chunk.mean(axis=0), len(chunk), f"trials {start + 1}-{start + len(chunk)}"))
    return rows


# ---------------------------------------------------------------- omega sweep


def omega_sweep(grid, prior: PriorVector, presets=("healthy", "clinical"), n_agents: int = 100, seed: int = 0,
                trial_count: int = 100, flipped: bool = True) -> list[dict]:
    """Mean advantageous rate per (preset, prior variant, omega) on paired seeds."""
    grid = [float(w) for w in grid]
    if any(not 0 <= w <= 1 for w in grid):
        raise ValueError("omega grid must lie in [0, 1]")
    variants = [("prior", prior)] + ([("flipped", prior.flipped())] if flipped else [])
    rows = []
    for preset in presets:
        params = orl_preset(preset).sample(n_agents, np.random.default_rng([seed, 2]))
        seeds = [[seed, i] for i in range(n_agents)]
        for variant, pv in variants:
            for w in grid:
                rates = simulate_cohort(params, seeds, pv, w, trial_count).advantageous_rates()
                rows.append({
                    "preset": preset, "prior": variant, "omega": w,
                    "advantageous_rate": float(rates.mean()), "sd": float(rates.std()),
                })
    return rows


# ---------------------------------------------------------------- fusion mechanisms


DEFAULT_MECHANISMS = (
    FusionConfig("linear", 0.25),
    FusionConfig("multiplicative", 0.25, {"temperature": 1.0}),
    FusionConfig("bayesian-average", 0.25, {"precision_rl": 1.0, "precision_prior": 1.0}),
    FusionConfig("attention", 0.25, {"temperature": 1.0}),
    FusionConfig("gated", 0.25, {"threshold": 0.1}),
)


def fusion_compare(mechanisms=DEFAULT_MECHANISMS, prior: PriorVector = None, preset: str = "clinical",
                   n_agents: int = 50, seed: int = 0, trial_count: int = 100) -> list[dict]:
    """Advantageous-rate distribution and block trajectory per fusion mechanism.

    ``trajectory_r`` correlates each mechanism's blockwise advantageous rate
    with the bare engine's on the same seeds.
    """
    prior = static_prior("cbt") if prior is None else prior
    params = orl_preset(preset).sample(n_agents, np.random.default_rng([seed, 3]))

    def cohort(fusion):
        actions = []
        for i, p in enumerate(params):
            action_rng, env_ss = seed_streams([seed, i])
            run = simulate_agent(OrlEngine(p), IgtEnvironment(None, env_ss), prior, fusion, trial_count,
                                 [seed, i], action_rng)
            actions.append(run.actions)
        return np.array(actions)

    base = TrajectorySummary.from_actions(cohort(None))
    rows = []
    for cfg in mechanisms:
        actions = cohort(cfg)
        summary = TrajectorySummary.from_actions(actions)
        rates = np.isin(actions, ADVANTAGEOUS).mean(axis=1)
        rows.append({
            "mechanism": cfg.mechanism,
            "advantageous_rate": float(rates.mean()),
            "sd": float(rates.std()),
            "trajectory_r": pearson_r(summary.block_advantageous, base.block_advantageous),
            "blocks": [float(x) for x in summary.block_advantageous],
        })
    return rows


def cbt_effect(preset: str = "clinical", omega: float = 0.25, n_agents: int = 100, seed: int = 0,
               trial_count: int = 100) -> dict:
    """Advantageous rate of bare, neutral-prior and CBT-prior agents on paired seeds."""
    params = orl_preset(preset).sample(n_agents, np.random.default_rng([seed, 4]))
    seeds = [[seed, i] for i in range(n_agents)]
    out = {"preset": preset, "omega": omega}
    for label, pv, w in (("bare", None, 0.0), ("neutral", static_prior("neutral"), omega),
                         ("cbt", static_prior("cbt"), omega)):
        out[label] = float(simulate_cohort(params, seeds, pv, w, trial_count).advantageous_rates().mean())
    return out


# ---------------------------------------------------------------- delay discounting


def dd_delayed_rate(params: HyperbolicParameters, prior: PriorVector, omega: float, n_agents: int = 50,
                    seed: int = 0, grid: DelayGrid = DelayGrid(), trial_count: int = 100) -> float:
    """Mean delayed-choice rate for a cohort of identical agents on distinct seeds.

    The trial list is shared (drawn from ``seed``) so cohorts that differ only
    in parameters or prior see the same offers.
    """
    trials = dd_generate_trials(grid, np.random.default_rng([seed, 5]))
    fusion = FusionConfig("linear", omega)
    total = 0.0
    for i in range(n_agents):
        action_rng, _ = seed_streams([seed, i])
        run = simulate_agent(HyperbolicEngine(params), DelayEnvironment(trials), prior, fusion, trial_count,
                             [seed, i], action_rng)
        total += run.actions.mean()
    return float(total / n_agents)


def dd_experiment(k_grid=(0.001, 0.005, 0.01, 0.02, 0.05, 0.1), omega: float = 0.25, n_agents: int = 50,
                  seed: int = 0, theta: float = None) -> dict:
    """Delayed-choice rate against the discount rate, and the CBT effect per preset."""
    neutral = static_prior("neutral", task="dd")
    cbt = static_prior("cbt", task="dd")
    th = DD_PRESETS["healthy"].theta if theta is None else theta
    curve = [
        {"k_discount": k, "delayed_rate": dd_delayed_rate(HyperbolicParameters(k, th), neutral, 0.0, n_agents, seed)}
        for k in k_grid
    ]
    presets = []
    for name, p in DD_PRESETS.items():
        presets.append({
            "preset": name,
            "k_discount": p.k_discount,
            "bare": dd_delayed_rate(p, neutral, 0.0, n_agents, seed),
            "cbt": dd_delayed_rate(p, cbt, omega, n_agents, seed),
        })
    return {"curve": curve, "presets": presets, "omega": omega}
