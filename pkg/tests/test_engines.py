import numpy as np
import pytest

import oracles
from fusionagent.core import AgentState, OrlParameters, TrialRecord
from fusionagent.engines import (
    HyperbolicEngine, HyperbolicParameters, OrlEngine, build_engine, hyperbolic_get_utility, orl_get_utility,
    orl_update_ef, orl_update_ev, orl_update_ps,
)
from fusionagent.tasks import DelayChoice

P = OrlParameters(a_rew=0.5, a_pun=0.2, k=1.0, beta_f=2.0, beta_p=3.0)


def state(ev=None, ef=None, ps=None):
    s = AgentState.initial()
    return s.copy(**{k: np.array(v, dtype=float) for k, v in (("ev", ev), ("ef", ef), ("ps", ps)) if v is not None})


def test_ev_step_from_zero():
    assert orl_update_ev(state(), 0, 100, P).ev[0] == 50


def test_ev_punishment_step():
    s = orl_update_ev(state(ev=[50, 0, 0, 0]), 0, -250, P)
    assert s.ev[0] == pytest.approx(-10, abs=1e-12)


def test_ev_zero_prediction_error():
    s = orl_update_ev(state(ev=[0, 7.5, 0, 0]), 1, 7.5, P)
    assert s.ev[1] == 7.5


def test_ef_step_towards_sign():
    s = orl_update_ef(state(), 2, 100, P.replace(a_rew=0.3))
    assert s.ef[2] == pytest.approx(0.3)


def test_ef_zero_outcome():
    assert orl_update_ef(state(), 0, 0, P).ef[0] == 0


def test_ef_fixed_point():
    s = state(ef=[1, 0, 0, 0])
    for _ in range(20):
        s = orl_update_ef(s, 0, 40, P)
    assert s.ef[0] == 1


def test_ps_first_choice():
    np.testing.assert_array_equal(orl_update_ps(state(), 0, P).ps, [1, 0, 0, 0])


def test_ps_decay_then_reset():
    s = orl_update_ps(state(ps=[1, 0, 0, 0]), 1, P)
    np.testing.assert_array_equal(s.ps, [0.5, 1, 0, 0])


def test_ps_no_decay_alternation():
    s = state()
    p = P.replace(k=0.0)
    for a in [0, 1] * 5:
        s = orl_update_ps(s, a, p)
    np.testing.assert_array_equal(s.ps, [1, 1, 0, 0])


def test_utility_examples():
    np.testing.assert_array_equal(orl_get_utility(state(), P), np.zeros(4))
    s = state(ev=[10, 0, 0, 0], ef=[1, 0, 0, 0], ps=[1, 0, 0, 0])
    np.testing.assert_array_equal(orl_get_utility(s, P), [15, 0, 0, 0])
    s = state(ev=[1, -2, 3, 0.5], ef=[1, 1, -1, 0], ps=[1, 0.5, 0, 0])
    np.testing.assert_array_equal(orl_get_utility(s, P.replace(beta_f=0, beta_p=0)), s.ev)


def test_updates_do_not_mutate_input():
    s = state(ev=[1, 2, 3, 4])
    before = s.ev.copy()
    orl_update_ev(s, 0, 100, P)
    OrlEngine(P).update(s, 0, TrialRecord(0, 100, 0))
    np.testing.assert_array_equal(s.ev, before)


def test_engine_scales_outcomes():
    eng = OrlEngine(P, payscale=100)
    s = eng.update(eng.init(), 0, TrialRecord(0, 100, -250))
    assert s.ev[0] == pytest.approx(0.2 * -1.5)
    assert s.trial_index == 1


def test_engine_matches_oracle_three_trials():
    eng = OrlEngine(P, payscale=1.0)
    s = eng.init()
    recs = [TrialRecord(0, 100, 0), TrialRecord(0, 100, -250), TrialRecord(3, 50, 0)]
    for r in recs:
        s = eng.update(s, r.action, r)
    ev, ef, ps = oracles.orl_trajectory([r.action for r in recs], [r.net for r in recs], 0.5, 0.2, 1.0)[-1]
    np.testing.assert_allclose(s.ev, ev, atol=1e-12)
    np.testing.assert_allclose(s.ef, ef, atol=1e-12)
    np.testing.assert_allclose(s.ps, ps, atol=1e-12)


def test_hyperbolic_indifference_point():
    u = hyperbolic_get_utility(DelayChoice(10, 20, 10), HyperbolicParameters(0.1))
    np.testing.assert_allclose(u, [10, 10])


def test_hyperbolic_limits():
    near_zero = hyperbolic_get_utility(DelayChoice(10, 20, 1e-9), HyperbolicParameters(0.1))
    assert near_zero[1] == pytest.approx(20)
    huge_k = hyperbolic_get_utility(DelayChoice(10, 20, 30), HyperbolicParameters(1e9))
    assert huge_k[1] < 1e-6 and np.argmax(huge_k) == 0


def test_hyperbolic_engine_needs_context():
    eng = HyperbolicEngine(HyperbolicParameters(0.01))
    with pytest.raises(ValueError, match="context"):
        eng.get_utility(eng.init())
    u = eng.get_utility(eng.init(), DelayChoice(10, 20, 10))
    np.testing.assert_allclose(u, [0.1, 20 / 1.1 / 100])


def test_hyperbolic_parameter_validation():
    for bad in ({"k_discount": 0}, {"k_discount": 0.1, "theta": -1}, {"k_discount": 0.1, "omega": 2}):
        with pytest.raises(ValueError):
            HyperbolicParameters(**bad)


def test_build_engine():
    assert isinstance(build_engine("orl", P), OrlEngine)
    assert isinstance(build_engine("hyperbolic", HyperbolicParameters(0.01)), HyperbolicEngine)
    with pytest.raises(ValueError, match="unknown engine"):
        build_engine("pvl", P)
