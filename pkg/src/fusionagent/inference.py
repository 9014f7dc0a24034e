"""Bayesian estimation of ORL parameters.

Sampling uses adaptive Metropolis-within-Gibbs in an unconstrained space:
logit for the learning rates, logit(k / 5) for the decay, log for the inverse
temperature and identity for the two weights. The fusion weight is never
sampled; it is fixed at the configured value.

Default priors (constrained space): uniform on the bounded ranges,
normal(0, 5) for beta_f and beta_p, half-normal(0, 5) for theta.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import PARAM_NAMES, OrlParameters, PriorVector, TrialRecord
from .engines import DEFAULT_PAYSCALE, build_engine
from .fusion import FusionConfig, fuse, simulate_cohort
from .stats import pearson_r

FITTED = ("a_rew", "a_pun", "k", "beta_f", "beta_p", "theta")
K_MAX = 5.0
PRIOR_DENSITIES = {
    "a_rew": "uniform(0, 1)",
    "a_pun": "uniform(0, 1)",
    "k": "uniform(0, 5)",
    "beta_f": "normal(0, 5)",
    "beta_p": "normal(0, 5)",
    "theta": "half-normal(0, 5)",
}
BETA_SD = 5.0
THETA_SD = 5.0


@dataclass
class SubjectData:
    subject_id: str
    trials: list[TrialRecord]
    contexts: list | None = None

    def __post_init__(self):
        if not self.trials:
            raise ValueError(f"subject {self.subject_id}: no trials")
        for i, t in enumerate(self.trials):
            if not 0 <= t.action < 4:
                raise ValueError(f"subject {self.subject_id}: trial {i} action {t.action} out of range")

    @property
    def actions(self) -> np.ndarray:
        return np.array([t.action for t in self.trials], dtype=np.int64)

    @property
    def nets(self) -> np.ndarray:
        return np.array([t.net for t in self.trials], dtype=float)


def _prior_values(prior, n=4) -> np.ndarray:
    if prior is None:
        return np.zeros(n)
    return prior.values if isinstance(prior, PriorVector) else np.asarray(prior, dtype=float)


def log_likelihood(data: SubjectData, p, prior=None, fusion: FusionConfig = None, engine: str = "orl",
                   payscale: float = DEFAULT_PAYSCALE) -> float:
    """Sum of log choice probabilities, replaying the engine through the observed trials.

    Works for any engine through its public interface; ``fusion`` defaults to
    linear fusion at ``p.omega``.
    """
    eng = build_engine(engine, p, payscale=payscale)
    pv = _prior_values(prior, eng.n_actions)
    fusion = fusion or FusionConfig("linear", p.omega)
    state = eng.init()
    total = 0.0
    for i, rec in enumerate(data.trials):
        context = data.contexts[i] if data.contexts else None
        u = fuse(eng.get_utility(state, context), pv, fusion)
        z = p.theta * u
        m = z.max()
        total += z[rec.action] - m - math.log(np.exp(z - m).sum())
        state = eng.update(state, rec.action, rec)
    return float(total)


@numba.njit(cache=True)
def _orl_loglik(actions, x, a_rew, a_pun, k, beta_f, beta_p, theta, prior, omega):
    ev = np.zeros(4)
    ef = np.zeros(4)
    ps = np.zeros(4)
    z = np.zeros(4)
    decay = 1.0 / (1.0 + k)
    total = 0.0
    for t in range(actions.shape[0]):
        a = actions[t]
        m = -np.inf
        for j in range(4):
            u = ev[j] + beta_f * ef[j] + beta_p * ps[j]
            u = (1.0 - omega) * u + omega * prior[j]
            z[j] = theta * u
            if z[j] > m:
                m = z[j]
        s = 0.0
        for j in range(4):
            s += np.exp(z[j] - m)
        total += z[a] - m - np.log(s)
        xt = x[t]
        rate = a_rew if xt >= 0 else a_pun
        sgn = 1.0 if xt > 0 else (-1.0 if xt < 0 else 0.0)
        ev[a] += rate * (xt - ev[a])
        ef[a] += rate * (sgn - ef[a])
        for j in range(4):
            ps[j] *= decay
        ps[a] = 1.0
    return total


def fast_log_likelihood(data: SubjectData, p: OrlParameters, prior=None, omega=None,
                        payscale: float = DEFAULT_PAYSCALE) -> float:
    """Compiled ORL + linear-fusion likelihood (same value as ``log_likelihood``)."""
    om = p.omega if omega is None else omega
    return _orl_loglik(data.actions, data.nets / payscale, p.a_rew, p.a_pun, p.k, p.beta_f, p.beta_p,
                       p.theta, _prior_values(prior), om)


# ---------------------------------------------------------------- transforms


def _softplus(z: float) -> float:
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def to_unconstrained(x: np.ndarray, names=FITTED) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = np.empty_like(x)
    for i, name in enumerate(names):
        v = x[i]
        if name in ("a_rew", "a_pun"):
            z[i] = math.log(v) - math.log1p(-v)
        elif name == "k":
            s = v / K_MAX
            z[i] = math.log(s) - math.log1p(-s)
        elif name == "theta":
            z[i] = math.log(v)
        else:
            z[i] = v
    return z


def from_unconstrained(z: np.ndarray, names=FITTED) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    x = np.empty_like(z)
    for i, name in enumerate(names):
        if name in ("a_rew", "a_pun"):
            x[i] = _sigmoid(z[i])
        elif name == "k":
            x[i] = K_MAX * _sigmoid(z[i])
        elif name == "theta":
            x[i] = math.exp(z[i])
        else:
            x[i] = z[i]
    return x


def log_prior_unconstrained(z: np.ndarray, names=FITTED) -> float:
    """Log prior density of the constrained value plus the log-Jacobian of the map."""
    total = 0.0
    for i, name in enumerate(names):
        zi = z[i]
        if name in ("a_rew", "a_pun", "k"):
            # uniform density is constant; log |dx/dz| = log s(1-s) (+ log 5 for k)
            total += -_softplus(-zi) - _softplus(zi)
        elif name == "theta":
            theta = math.exp(zi)
            total += -0.5 * (theta / THETA_SD) ** 2 + zi
        else:
            total += -0.5 * (zi / BETA_SD) ** 2
    return float(total)


# ---------------------------------------------------------------- diagnostics


def split_rhat(chains: np.ndarray) -> float:
    """Split potential scale reduction for an (m, n) array of draws."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)
    means = parts.mean(axis=1)
    w = parts.var(axis=1, ddof=1).mean()
    b = half * means.var(ddof=1)
    if w <= 0:
        return 1.0 if b <= 0 else float("inf")
    var_plus = (half - 1) / half * w + b / half
    return float(math.sqrt(var_plus / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocov(c) for c in chains])
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    prev = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    return float(m * n / max(tau, 1.0 / math.log10(m * n + 10)))


# ---------------------------------------------------------------- sampler


@dataclass
class FitConfig:
    chains: int = 4
    warmup: int = 2000
    draws: int = 4000
    seed: int = 0
    omega: float = 0.0
    fit_theta: bool = True
    theta: float = 1.0
    target_accept: tuple = (0.2, 0.4)
    adapt_every: int = 25
    payscale: float = DEFAULT_PAYSCALE
    rhat_threshold: float = 1.1


@dataclass
class PosteriorSamples:
    subject_id: str
    chains: np.ndarray  # (n_chains, n_draws, 7) in PARAM_NAMES order
    log_post: np.ndarray  # (n_chains, n_draws)
    fitted: tuple
    r_hat: dict
    ess: dict
    acceptance: float
    priors: dict = field(default_factory=lambda: dict(PRIOR_DENSITIES))
    settings: dict = field(default_factory=dict)

    @property
    def draws(self) -> np.ndarray:
        return self.chains.reshape(-1, self.chains.shape[-1])

    @property
    def converged(self) -> bool:
        return all(np.isfinite(v) and v < self.settings.get("rhat_threshold", 1.1) for v in self.r_hat.values())

    def parameters(self) -> list[OrlParameters]:
        return [OrlParameters.from_array(row) for row in self.draws]


def _make_logpost(data: SubjectData, cfg: FitConfig, prior, names):
    actions = data.actions
    x = data.nets / cfg.payscale
    pv = _prior_values(prior)
    idx = {n: i for i, n in enumerate(names)}

    def logpost(z):
        v = from_unconstrained(z, names)
        theta = v[idx["theta"]] if "theta" in idx else cfg.theta
        ll = _orl_loglik(actions, x, v[0], v[1], v[2], v[3], v[4], theta, pv, cfg.omega)
        return ll + log_prior_unconstrained(z, names)

    return logpost


def _initial_point(rng, names) -> np.ndarray:
    z = np.empty(len(names))
    for i, name in enumerate(names):
        if name == "theta":
            z[i] = rng.normal(0.0, 0.5)
        elif name == "k":
            z[i] = rng.normal(-1.0, 1.0)
        else:
            z[i] = rng.normal(0.0, 1.0)
    return z


def _run_chain(logpost, z0, cfg: FitConfig, rng) -> tuple[np.ndarray, np.ndarray, float]:
    """One chain of coordinate-wise random-walk Metropolis.

    Coordinates are whitened: proposals move ``w`` where ``z = center + L w``.
    ``L`` starts as the identity and is re-estimated from the chain's own
    warmup draws at fixed points; per-coordinate step sizes are tuned toward
    the target acceptance band throughout warmup and frozen afterwards.
    """
    d = len(z0)
    z = z0.copy()
    lp = logpost(z)
    chol = np.eye(d)
    step = np.full(d, 0.5)
    accepted = np.zeros(d)
    total_acc = 0
    out = np.empty((cfg.draws, d))
    out_lp = np.empty(cfg.draws)
    lo, hi = cfg.target_accept
    target = 0.5 * (lo + hi)
    refits = {int(cfg.warmup * f) for f in (0.3, 0.6)} if cfg.warmup >= 100 else set()
    history = np.empty((max(cfg.warmup, 1), d))
    last_refit = 0
    for it in range(cfg.warmup + cfg.draws):
        if it in refits:
            window = history[(last_refit + it) // 2: it]
            cov = np.cov(window, rowvar=False) + 1e-8 * np.eye(d)
            try:
                chol = np.linalg.cholesky(cov)
                step[:] = 2.4 / math.sqrt(d)
            except np.linalg.LinAlgError:
                pass
            last_refit = it
        noise = rng.standard_normal(d)
        logu = np.log(rng.random(d))
        for j in range(d):
            move = chol[:, j] * (step[j] * noise[j])
            z_new = z + move
            lp_new = logpost(z_new)
            if logu[j] < lp_new - lp:
                z, lp = z_new, lp_new
                accepted[j] += 1
                if it >= cfg.warmup:
                    total_acc += 1
        if it < cfg.warmup:
            history[it] = z
            if (it + 1) % cfg.adapt_every == 0:
                rate = accepted / cfg.adapt_every
                outside = (rate < lo) | (rate > hi)
                step[outside] *= np.exp(1.5 * (rate[outside] - target))
                accepted[:] = 0
        else:
            out[it - cfg.warmup] = z
            out_lp[it - cfg.warmup] = lp
    return out, out_lp, total_acc / max(1, cfg.draws * d)


def sample_posterior(data: SubjectData, config: FitConfig = None, prior=None) -> PosteriorSamples:
    cfg = config or FitConfig()
    names = FITTED if cfg.fit_theta else FITTED[:5]
    logpost = _make_logpost(data, cfg, prior, names)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    chains = np.empty((cfg.chains, cfg.draws, len(PARAM_NAMES)))
    log_post = np.empty((cfg.chains, cfg.draws))
    accs = []
    for c, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        z_draws, lp_draws, acc = _run_chain(logpost, _initial_point(rng, names), cfg, rng)
        x = np.array([from_unconstrained(z, names) for z in z_draws])
        full = np.empty((cfg.draws, len(PARAM_NAMES)))
        full[:, : len(names)] = x
        if not cfg.fit_theta:
            full[:, 5] = cfg.theta
        full[:, 6] = cfg.omega
        chains[c] = full
        log_post[c] = lp_draws
        accs.append(acc)
    r_hat = {n: split_rhat(chains[:, :, i]) for i, n in enumerate(names)}
    ess = {n: effective_sample_size(chains[:, :, i]) for i, n in enumerate(names)}
    settings = {
        "chains": cfg.chains,
        "warmup": cfg.warmup,
        "draws": cfg.draws,
        "seed": cfg.seed,
        "omega": cfg.omega,
        "fit_theta": cfg.fit_theta,
        "rhat_threshold": cfg.rhat_threshold,
        "sampler": "adaptive Metropolis-within-Gibbs",
    }
    return PosteriorSamples(data.subject_id, chains, log_post, names, r_hat, ess, float(np.mean(accs)),
                            settings=settings)


def point_estimate(samples: PosteriorSamples, method: str = "mean") -> OrlParameters:
    draws = samples.draws
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    if method == "mean":
        return OrlParameters.from_array(draws.mean(axis=0))
    if method == "median":
        return OrlParameters.from_array(np.median(draws, axis=0))
    if method == "map":
        best = np.argmax(samples.log_post.reshape(-1))
        return OrlParameters.from_array(draws[best])
    raise ValueError(f"unknown point estimate {method!r}; use mean, median or map")


# ---------------------------------------------------------------- recovery


@dataclass
class RecoveryReport:
    true_values: dict
    estimates: dict
    correlations: dict  # name -> r or None when not computable
    cohort_size: int
    excluded: int
    max_rhat: float
    settings: dict = field(default_factory=dict)


def _fit_one(args):
    data, cfg = args
    return sample_posterior(data, cfg)


def run_recovery(n_subjects: int, trial_count: int = 100, sampler=None, config: FitConfig = None,
                 seed: int = 0, workers: int = 1, point: str = "mean") -> RecoveryReport:
    """Simulate subjects from known parameters with the bare engine, refit, correlate."""
    from .presets import recovery_sampler

    if n_subjects < 2:
        raise ValueError("recovery needs at least two subjects")
    # theta is held at its configured value unless the config asks to fit it
    cfg = config or FitConfig(fit_theta=False)
    sampler = sampler or recovery_sampler
    ss_true, ss_sim, ss_fit = np.random.SeedSequence(seed).spawn(3)
    rng = np.random.default_rng(ss_true)
    truths = [sampler(rng).replace(omega=cfg.omega) for _ in range(n_subjects)]
    if not cfg.fit_theta:
        truths = [t.replace(theta=cfg.theta) for t in truths]
    sim_seeds = ss_sim.spawn(n_subjects)
    sim = simulate_cohort(truths, sim_seeds, prior=None, omega=0.0, trial_count=trial_count)
    datasets = []
    for i in range(n_subjects):
        trials = [TrialRecord(int(a), g, l) for a, g, l in zip(sim.actions[i], sim.gain_hist[i], sim.loss_hist[i])]
        datasets.append(SubjectData(f"s{i:03d}", trials))
    fit_seeds = [int(s.generate_state(1)[0]) for s in ss_fit.spawn(n_subjects)]
    jobs = [(d, FitConfig(**{**cfg.__dict__, "seed": s})) for d, s in zip(datasets, fit_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            fits = list(pool.map(_fit_one, jobs))
    else:
        fits = [_fit_one(j) for j in jobs]
    keep = [i for i, f in enumerate(fits) if f.converged]
    true_values, estimates, correlations = {}, {}, {}
    for j, name in enumerate(PARAM_NAMES):
        t = [getattr(truths[i], name) for i in keep]
        e = [getattr(point_estimate(fits[i], point), name) for i in keep]
        true_values[name] = t
        estimates[name] = e
        correlations[name] = pearson_r(t, e) if len(keep) >= 2 else None
    max_rhat = max(max(f.r_hat.values()) for f in fits)
    settings = {**fits[0].settings, "seed": seed, "trial_count": trial_count, "point_estimate": point}
    return RecoveryReport(true_values, estimates, correlations, n_subjects, n_subjects - len(keep), max_rhat, settings)

