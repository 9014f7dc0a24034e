import math

import numpy as np
import pytest

from fusionagent.core import OrlParameters, PriorVector
from fusionagent.engines import OrlEngine
from fusionagent.fusion import (
    CohortSimulator, FusionConfig, SimulationError, fuse, fuse_alternative, fuse_linear, igt_agent, sample_action,
    seed_streams, simulate_agent, simulate_cohort, softmax_policy,
)
from fusionagent.presets import orl_preset
from fusionagent.priors import static_prior
from fusionagent.tasks import IgtEnvironment

P = OrlParameters(0.3, 0.2, 0.5, 1.0, 0.5, theta=1.0)
CBT = np.array([-1.0, -1.0, 1.0, 1.0])


def test_linear_endpoints():
    u = np.array([4.0, -1.0, 0.5, 2.0])
    np.testing.assert_array_equal(fuse_linear(u, CBT, 0.0), u)
    np.testing.assert_array_equal(fuse_linear(u, CBT, 1.0), CBT)


def test_linear_example():
    np.testing.assert_allclose(fuse_linear([4, 0, 0, 0], [0, 0, 2, 2], 0.25), [3, 0, 0.5, 0.5])


def test_linear_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        fuse_linear([1, 2, 3], CBT, 0.5)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_policy([2, 2, 2, 2], 3.0), [0.25] * 4)
    np.testing.assert_allclose(softmax_policy([5, -1, 0, 9], 0.0), [0.25] * 4)
    e = math.e
    np.testing.assert_allclose(softmax_policy([1, 0, 0, 0], 1.0), [e / (e + 3)] + [1 / (e + 3)] * 3, rtol=1e-15)


def test_softmax_handles_large_utilities():
    p = softmax_policy([1000.0, 0, 0, 0], 10.0)
    assert np.isfinite(p).all() and p[0] == pytest.approx(1.0)


def test_sample_action_inverse_cdf():
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    assert [sample_action(probs, u) for u in (0.0, 0.099, 0.1, 0.35, 0.61, 0.999999)] == [0, 0, 1, 2, 3, 3]


def test_omega_zero_reproduces_bare_engine():
    bare = igt_agent(P, fusion=None, seed=42)
    fused = igt_agent(P.replace(omega=0.0), prior=PriorVector.zeros(), seed=42)
    assert np.array_equal(bare.actions, fused.actions)
    assert np.array_equal(bare.nets, fused.nets)
    for a, b in zip(bare.records, fused.records):
        assert np.array_equal(a.probs, b.probs)


def test_omega_zero_ignores_prior():
    a = igt_agent(P, prior=CBT, fusion=FusionConfig("linear", 0.0), seed=7)
    b = igt_agent(P, prior=-CBT, fusion=FusionConfig("linear", 0.0), seed=7)
    assert np.array_equal(a.actions, b.actions)


def test_theta_zero_uniform_choices():
    run = igt_agent(P.replace(theta=0.0), trial_count=10_000, seed=1)
    freq = np.bincount(run.actions, minlength=4) / 10_000
    assert np.all(np.abs(freq - 0.25) < 0.02)


def test_cbt_prior_raises_clinical_advantageous_rate():
    params = orl_preset("clinical").sample(200, np.random.default_rng(0))
    seeds = list(range(200))
    base = simulate_cohort(params, seeds, None, 0.0).advantageous_rates().mean()
    cbt = simulate_cohort(params, seeds, static_prior("cbt"), 0.25).advantageous_rates().mean()
    assert cbt > base


def test_run_records_everything():
    run = igt_agent(P.replace(omega=0.25), prior=static_prior("cbt"), trial_count=25, seed=3)
    assert len(run.records) == 25
    rec = run.records[5]
    np.testing.assert_allclose(rec.u_combined, 0.75 * rec.u_rl + 0.25 * static_prior("cbt").values)
    np.testing.assert_allclose(rec.probs, softmax_policy(rec.u_combined, P.theta))


def test_seed_determinism():
    a = igt_agent(P, prior=CBT, seed=5)
    b = igt_agent(P, prior=CBT, seed=5)
    assert np.array_equal(a.actions, b.actions) and np.array_equal(a.nets, b.nets)


def test_environment_stream_shared_across_omega():
    # the k-th draw from a deck has the same payoff whatever omega was used
    def deck_sequences(run):
        seqs = {d: [] for d in range(4)}
        for r in run.records:
            seqs[r.action].append(r.record.net)
        return seqs

    a = deck_sequences(igt_agent(P, prior=CBT, fusion=FusionConfig("linear", 0.0), seed=9))
    b = deck_sequences(igt_agent(P, prior=CBT, fusion=FusionConfig("linear", 0.8), seed=9))
    for d in range(4):
        n = min(len(a[d]), len(b[d]))
        assert a[d][:n] == b[d][:n]


def test_errors_carry_trial_index():
    class Broken(IgtEnvironment):
        def step(self, action):
            if self.draw_counts[action] + sum(self.draw_counts) > 6:
                raise RuntimeError("deck jammed")
            return super().step(action)

    rng, env_ss = seed_streams(0)
    with pytest.raises(SimulationError, match=r"trial \d+: deck jammed"):
        simulate_agent(OrlEngine(P), Broken(None, env_ss), CBT, None, 50, 0, rng)


def test_multiplicative_uniform_prior_is_identity():
    u = np.array([0.4, -0.2, 1.1, 0.0])
    out = fuse_alternative(u, np.zeros(4), FusionConfig("multiplicative", params={"temperature": 1.0}))
    np.testing.assert_allclose(softmax_policy(out, 1.0), softmax_policy(u, 1.0), atol=1e-12)


def test_bayesian_equal_precision_is_half_linear():
    u = np.array([0.4, -0.2, 1.1, 0.0])
    cfg = FusionConfig("bayesian-average", params={"precision_rl": 2.0, "precision_prior": 2.0})
    np.testing.assert_allclose(fuse(u, CBT, cfg), fuse_linear(u, CBT, 0.5))


def test_gated_zero_utility_uses_prior():
    cfg = FusionConfig("gated", params={"threshold": 0.1})
    np.testing.assert_array_equal(fuse(np.zeros(4), CBT, cfg), CBT)
    u = np.array([0.5, 0, 0, 0])
    np.testing.assert_array_equal(fuse(u, CBT, cfg), u)


def test_attention_blend_weights():
    cfg = FusionConfig("attention", params={"temperature": 1.0})
    u = np.array([1.0, 2.0, 3.0, 4.0])
    out = fuse(u, CBT, cfg)
    # equal prior magnitudes give equal attention 1/4 everywhere
    np.testing.assert_allclose(out, 0.75 * u + 0.25 * CBT)


def test_missing_mechanism_parameter():
    with pytest.raises(ValueError, match="temperature"):
        fuse(np.zeros(4), CBT, FusionConfig("attention"))
    with pytest.raises(ValueError, match="unknown fusion mechanism"):
        FusionConfig("stacked")
    with pytest.raises(ValueError, match="omega"):
        FusionConfig("linear", 1.5)


def test_cohort_matches_single_agents():
    params = orl_preset("clinical").sample(12, np.random.default_rng(2))
    params = [p.replace(omega=0.25) for p in params]
    seeds = [[3, i] for i in range(12)]
    pv = static_prior("cbt")
    sim = simulate_cohort(params, seeds, pv, None, 100)
    for i, p in enumerate(params):
        run = igt_agent(p, prior=pv, seed=seeds[i])
        assert np.array_equal(run.actions, sim.actions[i])
        assert np.array_equal(run.nets, sim.nets[i])


def test_cohort_epochs_equal_single_pass():
    params = orl_preset("healthy").sample(5, np.random.default_rng(4))
    one = CohortSimulator(params, list(range(5)))
    one.run(100, CBT, 0.25)
    split = CohortSimulator(params, list(range(5)))
    for _ in range(5):
        split.run(20, CBT, 0.25)
    assert np.array_equal(one.actions, split.actions)
    with pytest.raises(SimulationError):
        split.run(1, CBT, 0.25)
