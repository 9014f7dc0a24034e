"""Property checks for every stated invariant, 1000 generated cases each.

The functions are plain hypothesis tests; test_acceptance.py collects them
through ``ALL``.
"""
import math
import warnings

import numpy as np
import yaml
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import linprog

from fusionagent.core import AgentState, OrlParameters, PriorVector, TrialRecord
from fusionagent.engines import OrlEngine, orl_update_ef, orl_update_ev, orl_update_ps
from fusionagent.fusion import FusionConfig, fuse_linear, igt_agent, softmax_policy
from fusionagent.inference import (
    SubjectData, effective_sample_size, fast_log_likelihood, from_unconstrained, log_likelihood, split_rhat,
    to_unconstrained,
)
from fusionagent.io import RunConfig, output_header, read_table, write_table
from fusionagent.netsim import (
    COVERAGE, STRATEGIES, SocialConfig, SocialNetwork, health_score, net_score,
    propagate_priors, resolve_targets, run_community,
)
from fusionagent.priors import PolicyTranscript, PriorScaleConfig, TrialPolicy, aggregate_prior, prior_to_utility
from fusionagent.stats import TrajectorySummary, chi2_sf, kl_divergence, msd, pearson_r
from fusionagent.tasks import IgtEnvironment, IgtPayoffSchedule

N = 1000
prop = settings(max_examples=N, deadline=None)

unit = st.floats(0.0, 1.0)
outcome = st.floats(-5000.0, 5000.0, allow_nan=False)
deck = st.integers(0, 3)
seed = st.integers(0, 2**32 - 1)
moderate = st.floats(-30.0, 30.0, allow_nan=False)
METHODS = ("unit-std", "max-abs", "fixed-factor")


@st.composite
def orl_params(draw):
    return OrlParameters(draw(unit), draw(unit), draw(st.floats(0.0, 5.0)), draw(st.floats(-5, 5)),
                         draw(st.floats(-5, 5)), draw(st.floats(0.0, 5.0)))


@st.composite
def prob_vector(draw, n=4):
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)))
    assume(w.sum() > 1e-3)
    return w / w.sum()


def _state_after(actions, outcomes, p):
    state = AgentState.initial()
    for a, x in zip(actions, outcomes):
        state = orl_update_ps(orl_update_ef(orl_update_ev(state, a, x, p), a, x, p), a, p)
    return state


# ---------------------------------------------------------------- core and engines


@prop
@given(st.lists(st.tuples(deck, outcome), max_size=60), orl_params())
def ef_bounded(seq, p):
    state = _state_after([a for a, _ in seq], [x for _, x in seq], p)
    assert np.all(np.abs(state.ef) <= 1.0)


@prop
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=8))
def prior_vector_mean_zero(values):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pv = PriorVector(np.array(values))
    assert abs(pv.values.mean()) <= 1e-9 * max(1.0, max(abs(v) for v in values))


@prop
@given(st.lists(st.tuples(deck, outcome), min_size=1, max_size=30), orl_params())
def update_locality(seq, p):
    state = _state_after([a for a, _ in seq[:-1]], [x for _, x in seq[:-1]], p)
    a, x = seq[-1]
    others = [j for j in range(4) if j != a]
    ev = orl_update_ev(state, a, x, p)
    ef = orl_update_ef(state, a, x, p)
    assert np.array_equal(ev.ev[others], state.ev[others]) and np.array_equal(ev.ef, state.ef)
    assert np.array_equal(ef.ef[others], state.ef[others]) and np.array_equal(ef.ev, state.ev)


@prop
@given(st.lists(deck, min_size=1, max_size=60), st.floats(0.0, 50.0))
def ps_reset(actions, k):
    p = OrlParameters(0.5, 0.5, k, 0.0, 0.0)
    state = AgentState.initial()
    for a in actions:
        state = orl_update_ps(state, a, p)
        assert state.ps[a] == 1.0
        assert np.all((state.ps >= 0) & (state.ps <= 1))


@prop
@given(st.lists(st.tuples(deck, outcome), max_size=20), orl_params())
def engine_purity(seq, p):
    eng = OrlEngine(p)
    state = eng.init()
    for a, x in seq:
        state = eng.update(state, a, TrialRecord(a, max(x, 0.0), min(x, 0.0)))
    before = (state.ev.copy(), state.ef.copy(), state.ps.copy())
    u1 = eng.get_utility(state)
    u2 = eng.get_utility(state)
    assert np.array_equal(u1, u2)
    assert all(np.array_equal(b, c) for b, c in zip(before, (state.ev, state.ef, state.ps)))


# ---------------------------------------------------------------- environment


@prop
@given(seed, st.integers(1, 6), st.booleans())
def losses_per_block(s, blocks, shuffle):
    env = IgtEnvironment(IgtPayoffSchedule.classic(), s, shuffle)
    _, losses = env.payoff_table(10 * blocks)
    for d, sched in enumerate(env.schedule.decks):
        per_block = (losses[d].reshape(blocks, 10) != 0).sum(axis=1)
        assert np.all(per_block == len(sched.losses))


# ---------------------------------------------------------------- priors


@prop
@given(st.lists(prob_vector(), min_size=1, max_size=20))
def aggregate_is_distribution(rows):
    agg = aggregate_prior(PolicyTranscript("p", [TrialPolicy(r) for r in rows]))
    assert np.all(agg >= 0) and abs(agg.sum() - 1.0) <= 1e-9


@prop
@given(prob_vector(), st.sampled_from(METHODS), st.floats(0.1, 100.0))
def utility_mean_zero(prob, method, factor):
    pv = prior_to_utility(prob, PriorScaleConfig(method, factor))
    assert abs(pv.values.mean()) <= 1e-9


@prop
@given(prob_vector(), st.sampled_from(METHODS), st.floats(0.1, 100.0))
def argmax_preserved(prob, method, factor):
    top = np.sort(prob)
    assume(top[-1] - top[-2] > 1e-9)
    pv = prior_to_utility(prob, PriorScaleConfig(method, factor))
    assert np.argmax(pv.values) == np.argmax(prob)


@prop
@given(st.lists(prob_vector(), min_size=1, max_size=10), st.sampled_from(METHODS))
def prior_pipeline_deterministic(rows, method):
    make = lambda: prior_to_utility(aggregate_prior(PolicyTranscript("p", [TrialPolicy(r) for r in rows])),
                                    PriorScaleConfig(method))
    assert make().values.tobytes() == make().values.tobytes()


# ---------------------------------------------------------------- fusion and choice


@prop
@given(st.lists(moderate, min_size=4, max_size=4), st.lists(moderate, min_size=4, max_size=4), unit)
def fuse_affine_swap(u, p, omega):
    a = fuse_linear(u, np.array(p), omega)
    b = fuse_linear(p, np.array(u), 1.0 - omega)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * 30)


@prop
@given(st.lists(moderate, min_size=2, max_size=8), st.floats(0.0, 10.0))
def softmax_sums_to_one(u, theta):
    # |theta * u| <= 300, so every probability is representable
    pi = softmax_policy(u, theta)
    assert abs(pi.sum() - 1.0) <= 1e-9
    assert np.all(pi > 0)


@prop
@given(st.lists(moderate, min_size=2, max_size=8), st.floats(0.0, 10.0), st.floats(-100.0, 100.0))
def softmax_shift_invariant(u, theta, c):
    a = softmax_policy(u, theta)
    b = softmax_policy(np.array(u) + c, theta)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@prop
@given(st.lists(moderate, min_size=4, max_size=4), st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4),
       st.floats(0.0, 0.499))
def fused_argmax_follows_engine(u, p, omega):
    # u dominates p: the engine's lead survives the largest possible prior swing
    u = np.array(u)
    top = np.sort(u)
    assume((1.0 - omega) * (top[-1] - top[-2]) > 2.0 * omega * np.max(np.abs(p)) + 1e-9)
    assert np.argmax(fuse_linear(u, np.array(p), omega)) == np.argmax(u)


@prop
@given(seed, orl_params(), st.floats(0.0, 1.0))
def simulation_seed_deterministic(s, p, omega):
    prior = np.array([-0.5, -0.5, 0.5, 0.5])
    a = igt_agent(p, prior, FusionConfig("linear", omega), 20, s)
    b = igt_agent(p, prior, FusionConfig("linear", omega), 20, s)
    assert np.array_equal(a.actions, b.actions) and np.array_equal(a.nets, b.nets)
    assert all(np.array_equal(x.probs, y.probs) for x, y in zip(a.records, b.records))


# ---------------------------------------------------------------- inference


@prop
@given(st.lists(st.tuples(deck, st.sampled_from([50.0, 100.0]), st.sampled_from([0.0, -50.0, -250.0, -1250.0])),
                min_size=1, max_size=30), orl_params())
def likelihood_deterministic(trials, p):
    d = SubjectData("s", [TrialRecord(a, g, l) for a, g, l in trials])
    assert log_likelihood(d, p) == log_likelihood(d, p)
    assert fast_log_likelihood(d, p) == fast_log_likelihood(d, p)
    assert math.isclose(fast_log_likelihood(d, p), log_likelihood(d, p), rel_tol=1e-9, abs_tol=1e-9)


@prop
@given(seed, st.permutations(range(4)))
def chain_order_invariant(s, order):
    chains = np.random.default_rng(s).standard_normal((4, 60)) + np.arange(4)[:, None] * 0.1
    perm = chains[list(order)]
    pooled, pooled_perm = np.sort(chains.ravel()), np.sort(perm.ravel())
    assert np.array_equal(pooled, pooled_perm)
    assert math.isclose(split_rhat(chains), split_rhat(perm), rel_tol=1e-12)
    assert math.isclose(effective_sample_size(chains), effective_sample_size(perm), rel_tol=1e-9)


@prop
@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6), st.floats(1e-5, 5 - 1e-5), st.floats(-50, 50),
       st.floats(-50, 50), st.floats(1e-4, 50))
def reparametrization_round_trip(a, b, k, bf, bp, th):
    x = np.array([a, b, k, bf, bp, th])
    np.testing.assert_allclose(from_unconstrained(to_unconstrained(x)), x, rtol=1e-10, atol=1e-10)


# ---------------------------------------------------------------- network


@prop
@given(st.lists(deck, min_size=1, max_size=200))
def health_in_unit_interval(actions):
    h = float(health_score(net_score(actions), len(actions)))
    assert 0.0 <= h <= 1.0


@st.composite
def small_network(draw, max_n=12):
    n = draw(st.integers(3, max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    adj = np.zeros((n, n), dtype=bool)
    adj[np.triu_indices(n, 1)] = bits
    adj |= adj.T
    return SocialNetwork(n, adj, "random", {}, 0)


@prop
@given(small_network(40), st.sampled_from(STRATEGIES), seed)
def target_count_matches_coverage(net, strategy, s):
    scores = np.random.default_rng(s).integers(-100, 100, net.n)
    plan = resolve_targets(net, strategy, scores, s)
    assert len(plan.targets) == math.floor(COVERAGE[strategy] * net.n + 0.5)
    assert len(set(plan.targets)) == len(plan.targets)


@prop
@given(small_network(5), seed, st.sampled_from(("none", "community-education")))
def community_deterministic(net, s, strategy):
    params = [OrlParameters(0.3, 0.2, 0.5, 1.0, 0.5)] * net.n
    plan = resolve_targets(net, strategy)
    run = lambda: run_community(net, plan, params, SocialConfig(epochs=2), trial_count=10, seed=s)
    a, b = run(), run()
    assert np.array_equal(a.net_scores, b.net_scores) and np.array_equal(a.final_priors, b.final_priors)


@prop
@given(small_network(6), seed, unit)
def propagation_in_convex_hull(net, s, influence):
    rng = np.random.default_rng(s)
    own = rng.normal(size=(net.n, 4))
    eff = rng.normal(size=(net.n, 4))
    new = propagate_priors(net, own, eff, influence)
    for i in range(net.n):
        points = np.vstack([own[i], eff[net.neighbours(i)]]) if net.degrees[i] else np.vstack([own[i], eff[i]])
        # smallest L1 distance from new[i] to the hull, via weights plus slack
        m = len(points)
        a_eq = np.hstack([np.vstack([points.T, np.ones(m)]), np.eye(5), -np.eye(5)])
        cost = np.concatenate([np.zeros(m), np.ones(10)])
        res = linprog(cost, A_eq=a_eq, b_eq=np.append(new[i], 1.0), bounds=(0, None), method="highs")
        assert res.status == 0 and res.fun <= 1e-9, f"agent {i} left the hull"


# ---------------------------------------------------------------- metrics


@st.composite
def action_matrix(draw):
    rows = draw(st.integers(1, 4))
    return np.array(draw(st.lists(deck, min_size=rows * 20, max_size=rows * 20))).reshape(rows, 20)


@prop
@given(action_matrix(), action_matrix())
def msd_metric_properties(a, b):
    sa, sb = TrajectorySummary.from_actions(a), TrajectorySummary.from_actions(b)
    assert msd(sa, sa) == 0.0
    assert msd(sa, sb) == msd(sb, sa) >= 0.0


@prop
@given(prob_vector(), prob_vector())
def kl_gibbs(p, q):
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence(p, q) >= 0.0


@prop
@given(st.floats(0.0, 1e4), st.floats(0.0, 1e4), st.integers(1, 20))
def chi2_p_range_and_monotone(s1, s2, dof):
    lo, hi = min(s1, s2), max(s1, s2)
    p_lo, p_hi = chi2_sf(lo, dof), chi2_sf(hi, dof)
    assert 0.0 <= p_hi <= p_lo <= 1.0


@prop
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30), seed, st.floats(0.01, 100.0), st.floats(-100, 100))
def pearson_affine_invariant(x, s, a, b):
    x = np.array(x)
    # the shift must not swamp the spread, or the transform itself rounds away the data
    assume(x.std() > 0.1 and abs(b) <= 100 * a * x.std())
    y = x + np.random.default_rng(s).normal(size=len(x))
    r = pearson_r(x, y)
    assert abs(pearson_r(a * x + b, y) - r) <= 1e-12
    assert abs(pearson_r(x, a * y + b) - r) <= 1e-12


# ---------------------------------------------------------------- files


@prop
@given(st.sampled_from(("simulate", "network", "dd", "recover")), st.lists(st.integers(0, 10**6), min_size=1,
       max_size=5), st.floats(0.0, 1.0), st.integers(1, 500), st.dictionaries(st.sampled_from(["n", "grid", "x"]),
       st.integers(-100, 100)))
def config_round_trip(experiment, seeds, omega, trials, options):
    cfg = RunConfig(experiment=experiment, seeds=seeds, fusion={"omega": omega}, trial_count=trials,
                    options=options)
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    back = RunConfig.from_dict(yaml.safe_load(text))
    assert back == cfg and back.hash() == cfg.hash()
    assert yaml.safe_dump(back.to_dict(), sort_keys=False) == text


@settings(max_examples=N, deadline=None)
@given(st.text("0123456789abcdef", min_size=16, max_size=16), st.integers(0, 2**31))
def output_header_present(config_hash, s):
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as d:
        path = write_table(Path(d) / "t.csv", output_header("demo", config_hash, s), ["x"], [[1.5]])
        header, rows = read_table(path)
    assert header["config_hash"] == config_hash and header["seed"] == s and "tool_version" in header
    assert rows == [{"x": "1.5"}]


ALL = [
    ef_bounded, prior_vector_mean_zero, update_locality, ps_reset, engine_purity, losses_per_block,
    aggregate_is_distribution, utility_mean_zero, argmax_preserved, prior_pipeline_deterministic,
    fuse_affine_swap, softmax_sums_to_one, softmax_shift_invariant, fused_argmax_follows_engine,
    simulation_seed_deterministic, likelihood_deterministic, chain_order_invariant, reparametrization_round_trip,
    health_in_unit_interval, target_count_matches_coverage, community_deterministic, propagation_in_convex_hull,
    msd_metric_properties, kl_gibbs, chi2_p_range_and_monotone, pearson_affine_invariant, config_round_trip,
    output_header_present,
]
