"""Communities of fused agents on social graphs.

Agents interact only through their priors. A run is split into epochs; between
epochs each agent's effective prior becomes
``(1 - influence) * own_prior + influence * mean(neighbours' effective priors)``,
computed synchronously from the previous epoch's values.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .core import ADVANTAGEOUS, OrlParameters
from .fusion import CohortSimulator
from .priors import static_prior
from .tasks import IgtPayoffSchedule

log = logging.getLogger(__name__)

TOPOLOGIES = ("watts-strogatz", "barabasi-albert", "erdos-renyi")
STRATEGIES = ("none", "targeted-cbt", "hub", "random-cbt", "community-education")
COVERAGE = {"none": 0.0, "targeted-cbt": 0.2, "hub": 0.2, "random-cbt": 0.2, "community-education": 1.0}
DEFAULT_PARAMS = {
    "watts-strogatz": {"k": 6, "p": 0.1},
    "barabasi-albert": {"m": 2},
    "erdos-renyi": {"p": 0.06},
}
MAX_RETRIES = 100


@dataclass(frozen=True, eq=False)
class SocialNetwork:
    n: int
    adjacency: np.ndarray  # (n, n) bool, symmetric, zero diagonal
    topology: str
    params: dict
    seed: int

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum() // 2)

    def neighbours(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])


def _graph(topology: str, n: int, params: dict, seed: int):
    if topology == "watts-strogatz":
        return nx.watts_strogatz_graph(n, int(params["k"]), float(params["p"]), seed=seed)
    if topology == "barabasi-albert":
        m = int(params["m"])
        return nx.barabasi_albert_graph(n, m, seed=seed, initial_graph=nx.complete_graph(m + 1))
    return nx.gnp_random_graph(n, float(params["p"]), seed=seed)


def ba_edge_count(n: int, m: int) -> int:
    """Edges of the Barabasi-Albert construction used here: seed clique of m + 1 nodes."""
    return (m + 1) * m // 2 + m * (n - m - 1)


def generate_network(topology: str, n: int, params: dict = None, seed: int = 0) -> SocialNetwork:
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")
    if n < 3:
        raise ValueError("network needs at least 3 nodes")
    params = {**DEFAULT_PARAMS[topology], **(params or {})}
    if topology == "watts-strogatz":
        k, p = int(params["k"]), float(params["p"])
        if k % 2 or not 2 <= k < n or not 0 <= p <= 1:
            raise ValueError(f"watts-strogatz needs even 2 <= k < n and 0 <= p <= 1, got {params}")
    elif topology == "barabasi-albert":
        m = int(params["m"])
        if not 1 <= m < n - 1:
            raise ValueError(f"barabasi-albert needs 1 <= m < n - 1, got {params}")
    else:
        p = float(params["p"])
        if not 0 < p <= 1:
            raise ValueError(f"erdos-renyi needs 0 < p <= 1, got {params}")
    for attempt in range(MAX_RETRIES):
        s = seed + attempt
        graph = _graph(topology, n, params, s)
        if nx.is_connected(graph):
            adj = nx.to_numpy_array(graph, nodelist=range(n), dtype=bool)
            return SocialNetwork(n, adj, topology, params, s)
        log.debug("%s seed %d disconnected; retrying", topology, s)
    raise RuntimeError(f"no connected {topology} graph after {MAX_RETRIES} attempts")


@dataclass(frozen=True)
class InterventionPlan:
    strategy: str
    coverage: float
    targets: tuple


def _target_count(coverage: float, n: int) -> int:
    return int(np.floor(coverage * n + 0.5))


def resolve_targets(network: SocialNetwork, strategy: str, baseline_scores=None, rng=None) -> InterventionPlan:
    """Pick intervention targets; ties go to the lowest node index."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    n = network.n
    coverage = COVERAGE[strategy]
    count = _target_count(coverage, n)
    idx = np.arange(n)
    if strategy == "none":
        targets = ()
    elif strategy == "community-education":
        targets = tuple(range(n))
    elif strategy == "targeted-cbt":
        if baseline_scores is None:
            raise ValueError("targeted-cbt needs baseline scores")
        order = np.lexsort((idx, np.asarray(baseline_scores, dtype=float)))
        targets = tuple(sorted(int(i) for i in order[:count]))
    elif strategy == "hub":
        order = np.lexsort((idx, -network.degrees))
        targets = tuple(sorted(int(i) for i in order[:count]))
    else:
        rng = np.random.default_rng(rng)
        targets = tuple(sorted(int(i) for i in rng.choice(n, size=count, replace=False)))
    return InterventionPlan(strategy, coverage, targets)


@dataclass(frozen=True)
class SocialConfig:
    epochs: int = 5
    influence: float = 0.3
    omega: float = 0.25
    enabled: bool = True

    def __post_init__(self):
        if not 0 <= self.influence <= 1:
            raise ValueError("influence must lie in [0, 1]")


def propagate_priors(network: SocialNetwork, own: np.ndarray, effective: np.ndarray, influence: float) -> np.ndarray:
    deg = network.degrees[:, None].astype(float)
    neighbour_mean = np.divide(network.adjacency.astype(float) @ effective, deg,
                               out=effective.copy(), where=deg > 0)
    return (1.0 - influence) * own + influence * neighbour_mean


@dataclass(eq=False)
class CommunityResult:
    net_scores: np.ndarray
    health: np.ndarray
    features: np.ndarray
    plan: InterventionPlan
    topology: str
    mean_health: float
    final_priors: np.ndarray
    metadata: dict = field(default_factory=dict)


FEATURE_NAMES = ("advantageous_rate", "p_A", "p_B", "p_C", "p_D", "switch_rate", "mean_net_per_trial")


def net_score(actions) -> int:
    a = np.asarray(actions)
    good = np.isin(a, ADVANTAGEOUS).sum()
    return int(good - (len(a) - good))


def health_score(score, trial_count: int = 100):
    return (np.asarray(score, dtype=float) + trial_count) / (2.0 * trial_count)


def behavioural_features(actions: np.ndarray, nets: np.ndarray, payscale: float = 100.0) -> np.ndarray:
    a = np.atleast_2d(actions)
    nets = np.atleast_2d(nets)
    adv = np.isin(a, ADVANTAGEOUS).mean(axis=1)
    props = np.stack([(a == d).mean(axis=1) for d in range(4)], axis=1)
    switch = (np.diff(a, axis=1) != 0).mean(axis=1) if a.shape[1] > 1 else np.zeros(len(a))
    mean_net = nets.mean(axis=1) / payscale
    return np.column_stack([adv, props, switch, mean_net])


def agent_seeds(seed: int, n: int) -> list:
    return np.random.SeedSequence([seed, 0x5EED]).spawn(n)


def run_community(network: SocialNetwork, plan: InterventionPlan, params: list[OrlParameters],
                  social: SocialConfig = SocialConfig(), trial_count: int = 100, seed: int = 0,
                  cbt_prior=None, schedule: IgtPayoffSchedule = None) -> CommunityResult:
    n = network.n
    if len(params) != n:
        raise ValueError("one parameter set per node")
    if trial_count % social.epochs:
        raise ValueError("trial_count must split evenly into epochs")
    cbt = static_prior("cbt").values if cbt_prior is None else np.asarray(cbt_prior, dtype=float)
    own = np.zeros((n, 4))
    if plan.targets:
        own[list(plan.targets)] = cbt
    effective = own.copy()
    sim = CohortSimulator(params, agent_seeds(seed, n), trial_count, schedule)
    per_epoch = trial_count // social.epochs
    for epoch in range(social.epochs):
        sim.run(per_epoch, effective, social.omega)
        if social.enabled and epoch < social.epochs - 1:
            effective = propagate_priors(network, own, effective, social.influence)
    scores = np.array([net_score(row) for row in sim.actions])
    health = health_score(scores, trial_count)
    return CommunityResult(
        net_scores=scores,
        health=health,
        features=behavioural_features(sim.actions, sim.nets),
        plan=plan,
        topology=network.topology,
        mean_health=float(health.mean()),
        final_priors=effective,
        metadata={"seed": seed, "network_seed": network.seed, "social": social.__dict__.copy()},
    )


def intervention_run(network: SocialNetwork, strategy: str, params: list[OrlParameters],
                     social: SocialConfig = SocialConfig(), trial_count: int = 100, seed: int = 0) -> CommunityResult:
    """Resolve targets (with a no-intervention baseline pass when needed) and run."""
    baseline = None
    if strategy == "targeted-cbt":
        none = InterventionPlan("none", 0.0, ())
        baseline = run_community(network, none, params, social, trial_count, seed).net_scores
    rng = np.random.default_rng([seed, 0x7A26])
    plan = resolve_targets(network, strategy, baseline, rng)
    return run_community(network, plan, params, social, trial_count, seed)


@dataclass
class RobustnessTable:
    mean_health: dict  # (strategy, topology) -> mean H over seeds
    per_seed: dict  # (strategy, topology) -> list of mean H
    ranking: dict  # topology -> strategies, best first
    variance: dict  # strategy -> variance of its mean H across topologies
    warnings: list = field(default_factory=list)


def topology_robustness(strategies, topologies, seeds, params_for_seed, n: int = 100,
                        social: SocialConfig = SocialConfig(), trial_count: int = 100,
                        network_params: dict = None) -> RobustnessTable:
    """Mean health per (strategy, topology) over seeds, rankings and cross-topology variance.

    ``params_for_seed(seed, n)`` supplies the agents; the same agents are used
    for every strategy and topology at a given seed.
    """
    notes = []
    if len(seeds) < 2:
        msg = f"only {len(seeds)} seed per cell; variance estimates are unreliable"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    network_params = network_params or {}
    per_seed = {(s, t): [] for s in strategies for t in topologies}
    for seed in seeds:
        params = params_for_seed(seed, n)
        for topo in topologies:
            net = generate_network(topo, n, network_params.get(topo), seed)
            for strategy in strategies:
                res = intervention_run(net, strategy, params, social, trial_count, seed)
                per_seed[(strategy, topo)].append(res.mean_health)
    mean_health = {key: float(np.mean(v)) for key, v in per_seed.items()}
    ranking = {
        t: sorted(strategies, key=lambda s: (-mean_health[(s, t)], strategies.index(s))) for t in topologies
    }
    variance = {s: float(np.var([mean_health[(s, t)] for t in topologies])) for s in strategies}
    return RobustnessTable(mean_health, per_seed, ranking, variance, notes)


@dataclass
class PcaResult:
    coords: np.ndarray
    explained_ratio: np.ndarray
    components: np.ndarray


def pca_embed(features) -> PcaResult:
    """Top-two principal components of the feature covariance.

    Each component's first non-zero loading is made positive.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("pca_embed needs a 2-D array with at least 3 rows")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (len(x) - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    total = vals.sum()
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    tol = 1e-12 * scale
    comps = np.zeros((2, x.shape[1]))
    ratios = np.zeros(2)
    for i in range(min(2, x.shape[1])):
        if vals[i] <= tol:
            warnings.warn(f"feature matrix has rank < {i + 1}; component {i + 1} set to zero", stacklevel=2)
            continue
        v = vecs[:, i]
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if v[nz[0]] < 0:
            v = -v
        comps[i] = v
        ratios[i] = vals[i] / total
    return PcaResult(xc @ comps.T, ratios, comps)
