import numpy as np
import pytest

from opal.models import Run
from opal.opacity import verify, INITIAL_STATE, CURRENT_STATE, INFINITE_STEP, PROPERTIES
from opal.oracle import (oracle_opacity, exact_opacity, witness_violates, oracle_belief,
                         EnumerationBudgetExceeded)
from tests.helpers import ex1, random_system

# Holds-verdicts are cross-checked on every run up to this length; failures are
# checked at exactly the length of the verifier's shortest witness.
ORACLE_DEPTH = 6
CORPUS_SEEDS = range(200)


""" ex1 """


def test_oracle_current_ex1():
    s = ex1()
    v = oracle_opacity(s, 0.05, CURRENT_STATE, 4)
    assert not v.holds
    assert v.witness.labels(s) == ['B', 'D', 'B']
    assert v.secret_instant == 2
    assert oracle_opacity(s, 0.1, CURRENT_STATE, 6).holds


def test_oracle_initial_and_infinite_ex1():
    s = ex1()
    for prop in (INITIAL_STATE, INFINITE_STEP):
        v = oracle_opacity(s, 0.1, prop, 4)
        assert not v.holds
        assert v.witness.labels(s) == ['B', 'D']
        assert v.secret_instant == 0
        assert oracle_opacity(s, 0.15, prop, 6).holds


def test_oracle_short_depth_falls_back_to_initial_state():
    s = ex1()
    v = oracle_opacity(s, 0.05, CURRENT_STATE, 1)
    assert not v.holds
    assert v.witness.labels(s) == ['B']
    assert v.to_dict()['holds_up_to_depth'] is False


def test_exact_opacity_matches_zero_delta():
    s = ex1()
    for prop in PROPERTIES:
        assert (exact_opacity(s, prop, 4).holds
                == oracle_opacity(s, 0.0, prop, 4).holds)


def test_witness_violates_ex1():
    s = ex1()
    run = Run.from_labels(s, ['B', 'D', 'B'])
    assert witness_violates(s, 0.05, CURRENT_STATE, run)
    assert not witness_violates(s, 0.1, CURRENT_STATE, run)
    run = Run.from_labels(s, ['B', 'D'])
    assert witness_violates(s, 0.1, INFINITE_STEP, run, secret_instant=0)
    assert not witness_violates(s, 0.1, INFINITE_STEP, run, secret_instant=1)
    # runs must start from an initial state
    assert not witness_violates(s, 0.1, INITIAL_STATE, Run.from_labels(s, ['D', 'B']))


def test_oracle_belief_ex1():
    s = ex1()
    run = Run.from_labels(s, ['B', 'D', 'B'])
    assert oracle_belief(s, 0.1, 'current', run).labels(s) == ['A', 'B']
    run = Run.from_labels(s, ['B', 'D'])
    assert oracle_belief(s, 0.1, 'initial', run).labels(s) == ['B', 'C']
    with pytest.raises(ValueError):
        oracle_belief(s, 0.1, 'final', run)


def test_budget():
    with pytest.raises(EnumerationBudgetExceeded):
        oracle_opacity(ex1(), 0.2, CURRENT_STATE, 10, budget=5)


""" agreement with the verifiers """


@pytest.mark.parametrize('seed', CORPUS_SEEDS)
@pytest.mark.parametrize('prop', PROPERTIES)
def test_verifier_agrees_with_oracle(seed, prop):
    rng = np.random.default_rng(seed)
    s = random_system(rng)
    for delta in s.candidate_deltas():
        v = verify(s, delta, prop)
        depth = ORACLE_DEPTH if v.holds else max(len(v.witness), 1)
        o = oracle_opacity(s, delta, prop, depth)
        assert o.holds == v.holds, (seed, prop, delta)
        if not v.holds:
            assert len(o.witness) == len(v.witness)
            assert witness_violates(s, delta, prop, v.witness, v.secret_instant)
            assert v.trivially_failed == (not s.check_nontriviality(delta).passed)
