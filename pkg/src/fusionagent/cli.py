"""Command-line entry point: ``fusionagent <subcommand> [--config FILE] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import DECKS, PARAM_NAMES, OrlParameters
from .engines import HyperbolicEngine, HyperbolicParameters, OrlEngine
from .fusion import FusionConfig, seed_streams, simulate_agent
from .io import RunConfig, ingest_igt_csv, load_config, looks_like_path, output_header, resolve, write_table
from .presets import DD_PRESETS, PROVENANCE, orl_preset

log = logging.getLogger("fusionagent")

DEFAULT_OPTIONS = {
    "fit": {"chains": 4, "warmup": 2000, "draws": 4000, "fit_theta": True, "theta": 1.0, "omega": 0.0},
    "recover": {"n_subjects": 30, "chains": 4, "warmup": 1000, "draws": 2000, "fit_theta": False, "theta": 1.0},
    "consistency": {"n_subjects": 50, "replicates": 20, "omega": 0.25},
    "ablate": {"transcript": None, "bundled": ["compliant", "biased"], "block": 20},
    "sweep-omega": {"grid": [0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
                    "presets": ["healthy", "clinical"], "n_agents": 100},
    "fusion-compare": {"n_agents": 50},
    "network": {"n_nodes": 100, "epochs": 5, "influence": 0.3, "omega": 0.25, "propagate": True,
                "topologies": ["watts-strogatz", "barabasi-albert", "erdos-renyi"],
                "strategies": ["none", "targeted-cbt", "hub", "random-cbt", "community-education"],
                "embed_topology": "watts-strogatz"},
    "dd": {"k_grid": [0.001, 0.005, 0.01, 0.02, 0.05, 0.1], "omega": 0.25, "n_agents": 50},
    "prior": {"transcript": None, "live": False, "endpoint": None, "model": "gpt-4o", "template": "cbt",
              "persona_id": "cbt", "cache": "transcript.jsonl"},
}


def _options(cfg: RunConfig, name: str) -> dict:
    return {**DEFAULT_OPTIONS.get(name, {}), **cfg.options}


def _prior(cfg: RunConfig, task: str = "igt"):
    from .priors import PriorScaleConfig, aggregate_prior, load_transcript, prior_to_utility, static_prior

    scale = PriorScaleConfig(**cfg.prior_scale)
    if looks_like_path(cfg.prior):
        return prior_to_utility(aggregate_prior(load_transcript(resolve(cfg._path, cfg.prior))), scale)
    return static_prior(cfg.prior, task=task, scale=scale, seed=cfg.seeds[0])


def _fusion(cfg: RunConfig):
    f = cfg.fusion
    if f.get("mechanism") in (None, "none"):
        return None
    return FusionConfig(f.get("mechanism", "linear"), float(f.get("omega", 0.25)), dict(f.get("params") or {}))


def _with(cfg: RunConfig, **changes) -> RunConfig:
    new = dataclasses.replace(cfg, **changes)
    new._path = cfg._path
    return new


def _header(cfg, kind, **extra):
    return output_header(kind, cfg.hash(), cfg.seeds[0] if len(cfg.seeds) == 1 else cfg.seeds, **extra)


# ---------------------------------------------------------------- subcommands


def cmd_simulate(cfg: RunConfig, out: Path, args) -> list[Path]:
    seed = cfg.seeds[0]
    fusion = _fusion(cfg)
    env_cfg = cfg.environment
    records, summary = [], []
    if cfg.engine == "orl":
        from .tasks import IgtEnvironment, load_schedule

        schedule = load_schedule(resolve(cfg._path, env_cfg["schedule"])) if env_cfg.get("schedule") else None
        prior = _prior(cfg)
        if cfg.parameters:
            params = [OrlParameters(**cfg.parameters)] * cfg.cohort_size
        else:
            params = orl_preset(cfg.preset).sample(cfg.cohort_size, np.random.default_rng([seed, 1]))
    elif cfg.engine == "hyperbolic":
        from .tasks import DelayEnvironment, DelayGrid, dd_generate_trials

        prior = _prior(cfg, task="dd")
        base = HyperbolicParameters(**cfg.parameters) if cfg.parameters else DD_PRESETS[cfg.preset]
        params = [base] * cfg.cohort_size
        dd_trials = dd_generate_trials(DelayGrid(), np.random.default_rng([seed, 5]))
    else:
        raise ValueError(f"unknown engine {cfg.engine!r}")
    for i, p in enumerate(params):
        action_rng, env_ss = seed_streams([seed, i])
        if cfg.engine == "orl":
            engine = OrlEngine(p, float(env_cfg.get("payscale", 100.0)))
            env = IgtEnvironment(schedule, env_ss, bool(env_cfg.get("shuffle", True)))
        else:
            engine = HyperbolicEngine(p, float(env_cfg.get("payscale", 100.0)))
            env = DelayEnvironment(dd_trials)
        run = simulate_agent(engine, env, prior, fusion, cfg.trial_count, [seed, i], action_rng)
        for tl in run.records:
            records.append([i, tl.trial + 1, tl.action, tl.record.gain, tl.record.loss, tl.record.net,
                            *(float(x) for x in tl.probs)])
        summary.append([i, float(run.actions.mean()) if cfg.engine != "orl" else run.advantageous_rate(),
                        float(run.nets.sum())])
    n_act = len(prior)
    labels = list(DECKS[:n_act]) if cfg.engine == "orl" else ["immediate", "delayed"]
    meta = _header(cfg, "records", engine=cfg.engine, preset=cfg.preset, provenance=PROVENANCE)
    rate = "advantageous_rate" if cfg.engine == "orl" else "delayed_rate"
    return [
        write_table(out / "records.csv", meta, ["agent", "trial", "action", "gain", "loss", "net"]
                    + [f"p_{l}" for l in labels], records),
        write_table(out / "summary.csv", _header(cfg, "summary", engine=cfg.engine),
                    ["agent", rate, "total_net"], summary),
    ]


def _fit_config(opts: dict, seed: int, offset: int = 0):
    from .inference import FitConfig

    keys = ("chains", "warmup", "draws", "fit_theta", "theta", "omega")
    return FitConfig(seed=seed + offset, **{k: opts[k] for k in keys if k in opts})


def cmd_fit(cfg: RunConfig, out: Path, args) -> list[Path]:
    from concurrent.futures import ProcessPoolExecutor

    from .inference import FITTED

    opts = _options(cfg, "fit")
    data_path = args.data or opts.get("data")
    if not data_path:
        raise ValueError("fit needs a dataset: --data FILE or options.data")
    subjects = ingest_igt_csv(resolve(cfg._path if not args.data else None, data_path))
    prior = _prior(cfg) if cfg.prior != "neutral" else None
    configs = [_fit_config(opts, cfg.seeds[0], i) for i in range(len(subjects))]
    jobs = list(zip(subjects, configs, [prior] * len(subjects)))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            fits = list(pool.map(_fit_job, jobs))
    else:
        fits = [_fit_job(j) for j in jobs]
    paths, rows = [], []
    for s, f in zip(subjects, fits):
        draws = [[c, d, *map(float, f.chains[c, d]), float(f.log_post[c, d])]
                 for c in range(f.chains.shape[0]) for d in range(f.chains.shape[1])]
        meta = _header(cfg, "posterior", subject=s.subject_id, priors=f.priors, settings=f.settings)
        paths.append(write_table(out / f"posterior_{s.subject_id}.csv", meta,
                                 ["chain", "draw", *PARAM_NAMES, "log_post"], draws))
        for j, name in enumerate(PARAM_NAMES):
            col = f.draws[:, j]
            rows.append([s.subject_id, name, float(col.mean()), float(col.std()),
                         f.r_hat.get(name), f.ess.get(name), name in f.fitted])
    paths.append(write_table(out / "fit_summary.csv", _header(cfg, "fit-summary", fitted=list(FITTED)),
                             ["subject_id", "parameter", "mean", "sd", "r_hat", "ess", "sampled"], rows))
    return paths


def _fit_job(job):
    from .inference import sample_posterior

    data, fit_cfg, prior = job
    return sample_posterior(data, fit_cfg, prior)


def cmd_recover(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .inference import run_recovery

    opts = _options(cfg, "recover")
    report = run_recovery(int(opts["n_subjects"]), cfg.trial_count, config=_fit_config(opts, cfg.seeds[0]),
                          seed=cfg.seeds[0], workers=args.workers)
    rows = []
    for name in PARAM_NAMES:
        t = report.true_values[name]
        e = report.estimates[name]
        rows.append([name, report.correlations[name], len(t), float(np.mean(t)) if t else None,
                     float(np.mean(e)) if e else None])
    meta = _header(cfg, "recovery", cohort_size=report.cohort_size, excluded=report.excluded,
                   max_rhat=report.max_rhat, settings=report.settings)
    paths = [write_table(out / "recovery.csv", meta, ["parameter", "r", "n_used", "mean_true", "mean_estimate"], rows)]
    pairs = [[name, i, t, e] for name in PARAM_NAMES
             for i, (t, e) in enumerate(zip(report.true_values[name], report.estimates[name]))]
    paths.append(write_table(out / "recovery_pairs.csv", _header(cfg, "recovery-pairs"),
                             ["parameter", "subject", "true", "estimate"], pairs))
    return paths


def cmd_consistency(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .analysis import consistency_experiment

    opts = _options(cfg, "consistency")
    rep = consistency_experiment(int(opts["n_subjects"]), cfg.trial_count, float(opts["omega"]), _prior(cfg),
                                 int(opts["replicates"]), cfg.seeds[0])
    return [write_table(out / "consistency.csv", _header(cfg, "consistency", prior=cfg.prior),
                        ["pearson_r", "mae", "behavioral_difference", "subject_count"],
                        [[rep.pearson_r, rep.mae, rep.behavioral_difference, rep.subject_count]])]


def cmd_ablate(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .analysis import transcript_ablation
    from .priors import bundled_transcript, load_transcript

    opts = _options(cfg, "ablate")
    if args.transcript:
        sources = [(Path(p).name, load_transcript(p)) for p in args.transcript]
    elif opts.get("transcript"):
        sources = [(opts["transcript"], load_transcript(resolve(cfg._path, opts["transcript"])))]
    else:
        sources = [(n, bundled_transcript(n)) for n in opts["bundled"]]
    rows = []
    for name, tr in sources:
        for r in transcript_ablation(tr, int(opts["block"])):
            rows.append([name, r.label, r.trials, r.chi_square, r.p_value, r.kl_uniform, r.std, *r.policy])
    cols = ["transcript", "block", "trials", "chi_square", "p_value", "kl_uniform", "std"] + [f"p_{d}" for d in DECKS]
    return [write_table(out / "ablation.csv", _header(cfg, "ablation"), cols, rows)]


def cmd_sweep(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .analysis import omega_sweep

    opts = _options(cfg, "sweep-omega")
    if cfg.prior == "neutral":
        cfg = _with(cfg, prior="cbt")  # a zero prior makes the sweep flat
    prior = _prior(cfg)
    rows = omega_sweep(opts["grid"], prior, opts["presets"], int(opts["n_agents"]), cfg.seeds[0], cfg.trial_count)
    cols = ["preset", "prior", "omega", "advantageous_rate", "sd"]
    return [write_table(out / "omega_sweep.csv", _header(cfg, "omega-sweep", provenance=PROVENANCE), cols, rows)]


def cmd_fusion_compare(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .analysis import DEFAULT_MECHANISMS, fusion_compare

    opts = _options(cfg, "fusion-compare")
    mechs = DEFAULT_MECHANISMS
    if opts.get("mechanisms"):
        mechs = [FusionConfig(m["mechanism"], float(m.get("omega", 0.25)), dict(m.get("params") or {}))
                 for m in opts["mechanisms"]]
    prior = _prior(cfg) if cfg.prior != "neutral" else None
    rows = fusion_compare(mechs, prior, cfg.preset, int(opts["n_agents"]), cfg.seeds[0], cfg.trial_count)
    n_blocks = len(rows[0]["blocks"])
    table = [[r["mechanism"], r["advantageous_rate"], r["sd"], r["trajectory_r"], *r["blocks"]] for r in rows]
    cols = ["mechanism", "advantageous_rate", "sd", "trajectory_r"] + [f"block_{i + 1}" for i in range(n_blocks)]
    return [write_table(out / "fusion_compare.csv", _header(cfg, "fusion-compare"), cols, table)]


def cmd_network(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .netsim import SocialConfig, generate_network, intervention_run, pca_embed, topology_robustness

    opts = _options(cfg, "network")
    social = SocialConfig(int(opts["epochs"]), float(opts["influence"]), float(opts["omega"]), bool(opts["propagate"]))
    n = int(opts["n_nodes"])
    preset = orl_preset(cfg.preset)

    def params_for_seed(seed, size):
        return preset.sample(size, np.random.default_rng([seed, 6]))

    strategies, topologies = list(opts["strategies"]), list(opts["topologies"])
    table = topology_robustness(strategies, topologies, list(cfg.seeds), params_for_seed, n, social,
                                cfg.trial_count, opts.get("network_params"))
    rows = []
    for t in topologies:
        for rank, s in enumerate(table.ranking[t], start=1):
            vals = table.per_seed[(s, t)]
            rows.append([t, s, rank, table.mean_health[(s, t)], float(np.std(vals)), len(vals)])
    meta = _header(cfg, "network", preset=cfg.preset, warnings=table.warnings, social=social.__dict__)
    paths = [write_table(out / "network.csv", meta,
                         ["topology", "strategy", "rank", "mean_health", "sd_health", "seeds"], rows)]
    paths.append(write_table(out / "network_variance.csv", _header(cfg, "network-variance"),
                             ["strategy", "cross_topology_variance"], [[s, table.variance[s]] for s in strategies]))
    # behavioural embedding of one community per strategy at the first seed
    seed = cfg.seeds[0]
    net = generate_network(opts["embed_topology"], n, (opts.get("network_params") or {}).get(opts["embed_topology"]), seed)
    runs = [(s, intervention_run(net, s, params_for_seed(seed, n), social, cfg.trial_count, seed)) for s in strategies]
    emb = pca_embed(np.vstack([r.features for _, r in runs]))
    pts = []
    for k, (s, r) in enumerate(runs):
        for i in range(n):
            x, y = emb.coords[k * n + i]
            pts.append([s, i, int(i in r.plan.targets), float(r.health[i]), float(x), float(y)])
    paths.append(write_table(out / "network_pca.csv",
                             _header(cfg, "network-pca", explained_ratio=[float(v) for v in emb.explained_ratio]),
                             ["strategy", "agent", "targeted", "health", "pc1", "pc2"], pts))
    return paths


def cmd_dd(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .analysis import dd_experiment

    opts = _options(cfg, "dd")
    res = dd_experiment(tuple(opts["k_grid"]), float(opts["omega"]), int(opts["n_agents"]), cfg.seeds[0])
    return [
        write_table(out / "dd_curve.csv", _header(cfg, "dd-curve"), ["k_discount", "delayed_rate"], res["curve"]),
        write_table(out / "dd_presets.csv", _header(cfg, "dd-presets", omega=res["omega"], provenance=PROVENANCE),
                    ["preset", "k_discount", "bare", "cbt"], res["presets"]),
    ]


def cmd_prior(cfg: RunConfig, out: Path, args) -> list[Path]:
    from .priors import PriorScaleConfig, aggregate_prior, load_transcript, prior_to_utility

    opts = _options(cfg, "prior")
    scale = PriorScaleConfig(**cfg.prior_scale)
    if args.transcript:
        tr = load_transcript(args.transcript[0])
    elif opts.get("transcript"):
        tr = load_transcript(resolve(cfg._path, opts["transcript"]))
    elif opts.get("live"):
        from .provider import HttpPriorProvider, ProviderConfig, load_prompt

        if not opts.get("endpoint"):
            raise ValueError("live prior needs options.endpoint")
        provider = HttpPriorProvider(ProviderConfig(opts["endpoint"], model=opts["model"]))
        tr = provider.run(load_prompt(opts["template"]), opts["persona_id"], cfg.trial_count, cfg.seeds[0],
                          out / opts["cache"])
    else:
        pv = _prior(cfg)
        prob = None
        tr = None
    if tr is not None:
        prob = aggregate_prior(tr)
        pv = prior_to_utility(prob, scale)
    labels = DECKS[: len(pv)]
    rows = [[labels[i], float(pv.values[i]), None if prob is None else float(prob[i])] for i in range(len(pv))]
    meta = _header(cfg, "prior", method=pv.method, source=pv.source if tr is None else tr.persona_id,
                   scale=cfg.prior_scale)
    return [write_table(out / "prior.csv", meta, ["action", "utility", "probability"], rows)]


COMMANDS = {
    "simulate": (cmd_simulate, "simulate single agents or cohorts"),
    "fit": (cmd_fit, "posterior sampling on a gambling-task dataset"),
    "recover": (cmd_recover, "parameter recovery study"),
    "consistency": (cmd_consistency, "bare engine against a hybrid agent, subject by subject"),
    "ablate": (cmd_ablate, "uniformity statistics of persona transcripts"),
    "sweep-omega": (cmd_sweep, "advantageous rate across fusion weights"),
    "fusion-compare": (cmd_fusion_compare, "compare fusion mechanisms"),
    "network": (cmd_network, "intervention strategies on social networks"),
    "dd": (cmd_dd, "delay-discounting experiments"),
    "prior": (cmd_prior, "build a prior vector from a transcript, preset or live provider"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusionagent", description="Hybrid RL agents with static priors.")
    parser.add_argument("--version", action="version", version=f"fusionagent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--seed", type=int, help="override the config's seed list with one seed")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--workers", type=int, default=1, help="process pool size")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("--data", help="gambling-task CSV")
        if name in ("ablate", "prior"):
            p.add_argument("--transcript", nargs="+", help="transcript file(s)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
            cfg._path = args.config
        else:
            cfg = RunConfig(experiment=args.command)
            cfg._path = None
        if args.seed is not None:
            cfg = _with(cfg, seeds=[args.seed])
        out = Path(args.out or cfg.output_dir)
        if args.workers < 1:
            raise ValueError("--workers must be >= 1")
        paths = COMMANDS[args.command][0](cfg, out, args)
    except Exception as e:  # noqa: BLE001 - every failure becomes a diagnostic and exit 1
        log.debug("failure", exc_info=True)
        print(f"fusionagent {args.command}: error: {e}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
