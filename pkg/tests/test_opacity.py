import numpy as np
import pytest

from opal.models import MetricSystem, StateRecord
from opal.estimator import StateSpaceExceeded
from opal.opacity import (verify, verify_initial_state, verify_current_state,
                          verify_infinite_step, opacity_threshold,
                          INITIAL_STATE, CURRENT_STATE, INFINITE_STEP)
from opal.oracle import witness_violates
from tests.helpers import ex1, random_system


def _witness(verdict):
    return verdict.witness.labels(verdict.system)


""" current-state opacity """


def test_current_fails_at_005():
    v = verify_current_state(ex1(), 0.05)
    assert not v.holds
    assert v.trivially_failed
    assert v.system.labels[v.offending_state] == 'B'
    # a violation of length >= 1 is preferred over the bare initial state
    assert _witness(v) == ['B', 'D', 'B']
    assert v.secret_instant == 2


def test_current_holds_at_01():
    v = verify_current_state(ex1(), 0.1)
    assert v.holds
    assert v.witness is None
    assert not v.trivially_failed


""" initial-state opacity """


def test_initial_fails_at_01():
    v = verify_initial_state(ex1(), 0.1)
    assert not v.holds
    assert not v.trivially_failed
    assert _witness(v) == ['B', 'D']
    assert v.secret_instant == 0


def test_initial_holds_at_015():
    assert verify_initial_state(ex1(), 0.15).holds


""" infinite-step opacity """


def test_infinite_fails_at_01():
    v = verify_infinite_step(ex1(), 0.1)
    assert not v.holds
    assert _witness(v) == ['B', 'D']
    assert v.secret_instant == 0
    assert v.stats['initial_estimator_nodes'] == 7


def test_infinite_holds_at_015():
    assert verify_infinite_step(ex1(), 0.15).holds


def test_infinite_implies_initial_and_current():
    s = ex1()
    for delta in s.candidate_deltas():
        if verify(s, delta, INFINITE_STEP).holds:
            assert verify(s, delta, INITIAL_STATE).holds
            assert verify(s, delta, CURRENT_STATE).holds


""" witnesses """


@pytest.mark.parametrize('prop', [INITIAL_STATE, CURRENT_STATE, INFINITE_STEP])
@pytest.mark.parametrize('delta', [0.0, 0.05, 0.1])
def test_witnesses_violate(prop, delta):
    s = ex1()
    v = verify(s, delta, prop)
    if v.holds:
        return
    assert v.witness.is_valid(s)
    assert v.witness.states[0] in s.initial_set
    assert witness_violates(s, delta, prop, v.witness, v.secret_instant)


def test_verdict_to_dict():
    d = verify(ex1(), 0.05, CURRENT_STATE).to_dict()
    assert d['holds'] is False
    assert d['offending_state'] == 'B'
    assert d['witness']['states'] == ['B', 'D', 'B']
    assert d['witness']['outputs'] == [[0.1], [0.35], [0.1]]


""" monotonicity and thresholds """


@pytest.mark.parametrize('prop', [INITIAL_STATE, CURRENT_STATE, INFINITE_STEP])
def test_verdicts_monotone_in_delta(prop):
    s = ex1()
    verdicts = [verify(s, d, prop).holds for d in s.candidate_deltas()]
    first = verdicts.index(True) if True in verdicts else len(verdicts)
    assert all(verdicts[first:])
    assert not any(verdicts[:first])


@pytest.mark.parametrize('seed', range(60))
def test_random_verdicts_monotone_and_nested(seed):
    s = random_system(np.random.default_rng(seed))
    verdicts = dict((prop, [verify(s, d, prop).holds for d in s.candidate_deltas()])
                    for prop in (INITIAL_STATE, CURRENT_STATE, INFINITE_STEP))
    for prop, holds in verdicts.items():
        for before, after in zip(holds, holds[1:]):
            assert after or not before, (seed, prop)
    for k, inf in enumerate(verdicts[INFINITE_STEP]):
        if inf:
            assert verdicts[INITIAL_STATE][k] and verdicts[CURRENT_STATE][k], (seed, k)


def test_thresholds_ex1():
    s = ex1()
    assert opacity_threshold(s, CURRENT_STATE) == 0.1
    assert opacity_threshold(s, INITIAL_STATE) == pytest.approx(0.15)
    assert opacity_threshold(s, INFINITE_STEP) == pytest.approx(0.15)


def test_threshold_none_when_secret_always_exposed():
    # the only initial state is secret, so no precision hides it
    states = [StateRecord('s', [0.0], True, True), StateRecord('t', [1.0], False, False)]
    s = MetricSystem(states, ['u'], [(0, 0, 1)])
    assert opacity_threshold(s, INITIAL_STATE) is None
    v = verify(s, 5.0, INITIAL_STATE)
    assert v.trivially_failed
    assert v.witness.labels(s) == ['s', 't']


def test_no_secret_states_always_opaque():
    states = [StateRecord('a', [0.0], True, False), StateRecord('b', [1.0], False, False)]
    s = MetricSystem(states, ['u'], [(0, 0, 1), (1, 0, 0)])
    for prop in (INITIAL_STATE, CURRENT_STATE, INFINITE_STEP):
        assert verify(s, 0.0, prop).holds
        assert opacity_threshold(s, prop) == 0.0


""" errors """


def test_verify_rejects_bad_arguments():
    with pytest.raises(ValueError, match="delta must be nonnegative"):
        verify(ex1(), -0.1, CURRENT_STATE)
    with pytest.raises(ValueError, match="unknown property"):
        verify(ex1(), 0.1, 'final')


def test_node_cap_propagates():
    with pytest.raises(StateSpaceExceeded):
        verify(ex1(), 0.1, INFINITE_STEP, node_cap=2)


def test_slack_changes_verdict():
    s = ex1()
    assert not verify(s, 0.14, INITIAL_STATE).holds
    assert verify(s, 0.14, INITIAL_STATE, slack=0.02).holds


def test_threshold_accounts_for_slack():
    s = ex1()
    thr = opacity_threshold(s, INITIAL_STATE, slack=0.02)
    assert thr == pytest.approx(0.13)
    assert verify(s, thr, INITIAL_STATE, slack=0.02).holds
    assert opacity_threshold(s, CURRENT_STATE, slack=0.02) == pytest.approx(0.08)
    assert opacity_threshold(s, CURRENT_STATE, slack=0.5) == 0.0
